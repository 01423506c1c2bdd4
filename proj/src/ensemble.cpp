#include "filtopt/ensemble.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace filtopt {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = seed;
  std::uint64_t h = splitmix64(x);
  x = h ^ (a * 0xD1B54A32D192ED03ULL);
  h = splitmix64(x);
  x = h ^ (b * 0xAEF17502108EF2D9ULL + 0x2545F4914F6CDD1DULL);
  return splitmix64(x);
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& s : state_) s = splitmix64(x);
}

RngStream::result_type RngStream::operator()() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double RngStream::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double RngStream::normal() { return normal_(*this); }

Eigen::VectorXd RngStream::normal_vector(Eigen::Index d) {
  Eigen::VectorXd z(d);
  for (Eigen::Index j = 0; j < d; ++j) z[j] = normal();
  return z;
}

RngStream RngStream::substream(std::uint64_t k, std::uint64_t i) const {
  return RngStream(derive_seed(seed_, k, i));
}

WeightedEnsemble::WeightedEnsemble(Matrix particles, Eigen::VectorXd weights)
    : particles_(std::move(particles)), weights_(std::move(weights)) {
  validate();
}

WeightedEnsemble::WeightedEnsemble(const std::vector<ParameterVector>& particles,
                                   Eigen::VectorXd weights)
    : weights_(std::move(weights)) {
  if (particles.empty()) throw StructuralError("ensemble needs at least one particle");
  const Eigen::Index d = particles.front().size();
  particles_.resize(d, static_cast<Eigen::Index>(particles.size()));
  for (std::size_t i = 0; i < particles.size(); ++i) {
    if (particles[i].size() != d)
      throw StructuralError(fmt::format("particle {} has dimension {}, expected {}", i,
                                        particles[i].size(), d));
    particles_.col(static_cast<Eigen::Index>(i)) = particles[i];
  }
  validate();
}

WeightedEnsemble WeightedEnsemble::uniform(Matrix particles) {
  const auto n = particles.cols();
  if (n < 1) throw StructuralError("ensemble needs at least one particle");
  return WeightedEnsemble(std::move(particles),
                          Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
}

void WeightedEnsemble::validate() const {
  if (particles_.cols() < 1 || particles_.rows() < 1)
    throw StructuralError("ensemble needs at least one particle of dimension >= 1");
  if (weights_.size() != particles_.cols())
    throw StructuralError(fmt::format("{} weights for {} particles", weights_.size(),
                                      particles_.cols()));
  if (!particles_.allFinite()) throw NumericError("ensemble holds a non-finite particle");
  if (!weights_.allFinite() || (weights_.array() < 0.0).any())
    throw NumericError("ensemble weights must be finite and non-negative");
  if (std::abs(weights_.sum() - 1.0) > 1e-10)
    throw NumericError(fmt::format("ensemble weights sum to {:.17g}", weights_.sum()));
}

ParameterVector ensemble_mean(const WeightedEnsemble& ens) {
  return ens.particles() * ens.weights();
}

Matrix ensemble_covariance(const WeightedEnsemble& ens, const ParameterVector& mean) {
  if (mean.size() != ens.dim())
    throw StructuralError(
        fmt::format("mean has dimension {}, ensemble {}", mean.size(), ens.dim()));
  const Matrix centered = ens.particles().colwise() - mean;
  Matrix cov = centered * ens.weights().asDiagonal() * centered.transpose();
  return symmetrize(cov);
}

Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& log_raw) {
  if (log_raw.size() == 0) throw StructuralError("no log-weights to normalize");
  double top = -std::numeric_limits<double>::infinity();
  for (double v : log_raw) {
    if (std::isnan(v)) continue;
    if (v == std::numeric_limits<double>::infinity())
      throw NumericError("log-weight is +inf");
    top = std::max(top, v);
  }
  if (!std::isfinite(top)) throw DegenerateWeightsError("all importance weights are zero");

  Eigen::VectorXd w(log_raw.size());
  for (Eigen::Index i = 0; i < w.size(); ++i)
    w[i] = std::isnan(log_raw[i]) ? 0.0 : std::exp(log_raw[i] - top);
  w /= w.sum();
  return w;
}

Matrix psd_factor(const Matrix& cov) {
  if (cov.rows() != cov.cols()) throw StructuralError("covariance must be square");
  if (!cov.allFinite()) throw NumericError("covariance has non-finite entries");
  if (cov.isZero(0.0)) return Matrix::Zero(cov.rows(), cov.cols());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(cov));
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  Eigen::VectorXd values = eig.eigenvalues();
  const double tol = 1e-10 * std::max(1.0, values.maxCoeff());
  for (Eigen::Index j = 0; j < values.size(); ++j) {
    if (values[j] < -tol)
      throw NumericError(fmt::format("covariance is indefinite (eigenvalue {:.3e})", values[j]));
    values[j] = values[j] > 0.0 ? std::sqrt(values[j]) : 0.0;
  }
  return eig.eigenvectors() * values.asDiagonal();
}

GaussianSampler::GaussianSampler(ParameterVector mean, const Matrix& cov)
    : mean_(std::move(mean)) {
  if (cov.rows() != mean_.size() || cov.cols() != mean_.size())
    throw StructuralError(fmt::format("covariance is {}x{}, mean has dimension {}", cov.rows(),
                                      cov.cols(), mean_.size()));
  factor_ = psd_factor(cov);
  zero_ = factor_.isZero(0.0);
}

void GaussianSampler::draw_into(RngStream& rng, Eigen::Ref<Eigen::VectorXd> out) const {
  if (zero_) {
    out = mean_;
    return;
  }
  out = mean_ + factor_ * rng.normal_vector(mean_.size());
}

ParameterVector GaussianSampler::draw(RngStream& rng) const {
  ParameterVector out(mean_.size());
  draw_into(rng, out);
  return out;
}

ParameterVector sample_gaussian(const ParameterVector& mean, const Matrix& cov, RngStream& rng) {
  return GaussianSampler(mean, cov).draw(rng);
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace filtopt
