#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "filtopt/errors.hpp"

namespace filtopt {

using ParameterVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;

/// Seeded xoshiro256** stream with keyed substreams.
///
/// A substream is a pure function of (seed, k, i), so per-particle work keyed
/// by iteration and particle index draws the same numbers no matter which
/// thread evaluates it or in which order.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()();

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double normal();
  Eigen::VectorXd normal_vector(Eigen::Index d);

  RngStream substream(std::uint64_t k, std::uint64_t i) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Mix several words into one seed (splitmix64 chain).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// N particles (stored as the columns of a d x N matrix) with normalized weights.
class WeightedEnsemble {
 public:
  WeightedEnsemble(Matrix particles, Eigen::VectorXd weights);
  WeightedEnsemble(const std::vector<ParameterVector>& particles, Eigen::VectorXd weights);

  static WeightedEnsemble uniform(Matrix particles);

  Eigen::Index size() const { return particles_.cols(); }
  Eigen::Index dim() const { return particles_.rows(); }
  const Matrix& particles() const { return particles_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  auto particle(Eigen::Index i) const { return particles_.col(i); }

 private:
  void validate() const;

  Matrix particles_;
  Eigen::VectorXd weights_;
};

ParameterVector ensemble_mean(const WeightedEnsemble& ens);

/// Weighted second central moment about `mean`, symmetrized.
Matrix ensemble_covariance(const WeightedEnsemble& ens, const ParameterVector& mean);

/// exp(l - max l) / sum exp(l - max l). NaN entries count as -inf.
/// Throws DegenerateWeightsError when no entry is finite.
Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& log_raw);

/// Square-root factor F with F F^T = cov. Eigenvalues in [-tol, 0) are
/// clamped to zero, tol = 1e-10 * max(1, largest eigenvalue); anything more
/// negative throws NumericError.
Matrix psd_factor(const Matrix& cov);

/// Draws from N(mean, cov) with the factor computed once.
class GaussianSampler {
 public:
  GaussianSampler(ParameterVector mean, const Matrix& cov);

  ParameterVector draw(RngStream& rng) const;
  /// Writes mean + F z into `out` using fresh normals from rng.
  void draw_into(RngStream& rng, Eigen::Ref<Eigen::VectorXd> out) const;

  const ParameterVector& mean() const { return mean_; }
  const Matrix& factor() const { return factor_; }
  bool degenerate() const { return zero_; }

 private:
  ParameterVector mean_;
  Matrix factor_;
  bool zero_;
};

ParameterVector sample_gaussian(const ParameterVector& mean, const Matrix& cov, RngStream& rng);

/// (M + M^T) / 2
Matrix symmetrize(const Matrix& m);

}  // namespace filtopt
