#include "filtopt/pfso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "parallel.hpp"

namespace filtopt {

namespace {

enum class Stage : std::uint64_t { propagate = 1, resample = 2, perturb = 3 };

// Iteration indices never reach this key, so stage streams cannot collide
// with the (k, i) substreams drawn from them.
constexpr std::uint64_t kStageKey = ~std::uint64_t{0};

RngStream stage_stream(const RngStream& rng, Stage stage) {
  return rng.substream(kStageKey, static_cast<std::uint64_t>(stage));
}

double safe_log_likelihood(const LossComponent& loss, ConstVecRef theta, const Datum& datum,
                           double lambda) {
  try {
    const double ll = log_likelihood(loss, theta, datum, lambda);
    return std::isnan(ll) ? -std::numeric_limits<double>::infinity() : ll;
  } catch (const DomainError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

bool accept_move(double log_current, double log_candidate, double v) {
  if (log_candidate == -std::numeric_limits<double>::infinity()) return false;
  if (log_candidate >= log_current) return true;
  return v <= std::exp(log_candidate - log_current);
}

WeightedEnsemble expand_counts(const Matrix& particles, const std::vector<std::size_t>& counts) {
  Matrix out(particles.rows(), particles.cols());
  Eigen::Index slot = 0;
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (std::size_t c = 0; c < counts[i]; ++c) out.col(slot++) = particles.col(static_cast<Eigen::Index>(i));
  return WeightedEnsemble::uniform(std::move(out));
}

}  // namespace

void PfsoConfig::validate() const {
  if (particles < 1) throw ConfigError("pfso.particles", "must be >= 1");
  if (!(lambda > 0.0)) throw ConfigError("lambda", "must be positive");
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("pfso.rho", "must lie in (0, 1]");
  if (!(perturbation_scale >= 0.0) || !std::isfinite(perturbation_scale))
    throw ConfigError("pfso.perturbation_scale", "must be a finite non-negative number");
}

PfsoState init_state(const ParameterVector& theta0, const Matrix& V0, std::size_t n,
                     const RngStream& rng) {
  if (n < 1) throw ConfigError("pfso.particles", "must be >= 1");
  const GaussianSampler prior(theta0, V0);
  Matrix particles(theta0.size(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    RngStream r = rng.substream(0, i);
    prior.draw_into(r, particles.col(static_cast<Eigen::Index>(i)));
  }
  return PfsoState{WeightedEnsemble::uniform(std::move(particles)), theta0, symmetrize(V0), 0};
}

Matrix liu_west_propagate(const PfsoState& state, double rho, const RngStream& rng,
                          unsigned workers) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("pfso.rho", "must lie in (0, 1]");
  const Matrix& current = state.ensemble.particles();
  const Eigen::Index d = current.rows();
  if (state.mean.size() != d) throw StructuralError("PFSO state mean has the wrong dimension");

  const double gamma = 1.0 - rho * rho;
  const Matrix factor = psd_factor(gamma * state.cov);
  const bool no_noise = factor.isZero(0.0);
  const ParameterVector shift = (1.0 - rho) * state.mean;
  const std::uint64_t k = state.k + 1;

  Matrix out(d, current.cols());
  detail::parallel_for(static_cast<std::size_t>(current.cols()), workers, [&](std::size_t i) {
    const auto col = static_cast<Eigen::Index>(i);
    out.col(col) = rho * current.col(col) + shift;
    if (!no_noise) {
      RngStream r = rng.substream(k, i);
      out.col(col) += factor * r.normal_vector(d);
    }
  });
  return out;
}

std::vector<std::size_t> residual_resample_counts(const Eigen::VectorXd& weights, std::size_t m,
                                                  RngStream& rng) {
  const auto n = static_cast<std::size_t>(weights.size());
  if (n == 0) throw StructuralError("cannot resample an empty weight vector");
  std::vector<std::size_t> counts(n, 0);
  std::vector<double> cumulative(n, 0.0);
  std::size_t assigned = 0;
  double total = 0.0;
  const double scale = static_cast<double>(m);
  for (std::size_t i = 0; i < n; ++i) {
    const double expected = scale * weights[static_cast<Eigen::Index>(i)];
    const double whole = std::floor(expected);
    counts[i] = static_cast<std::size_t>(whole);
    assigned += counts[i];
    total += expected - whole;
    cumulative[i] = total;
  }
  if (assigned > m) throw NumericError("resampling weights sum above one");
  const std::size_t remaining = m - assigned;
  if (remaining == 0) return counts;
  if (!(total > 0.0)) {
    auto extra = multinomial_resample_counts(weights, remaining, rng);
    for (std::size_t i = 0; i < n; ++i) counts[i] += extra[i];
    return counts;
  }
  for (std::size_t r = 0; r < remaining; ++r) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t idx =
        it == cumulative.end() ? n - 1 : static_cast<std::size_t>(it - cumulative.begin());
    ++counts[idx];
  }
  return counts;
}

std::vector<std::size_t> multinomial_resample_counts(const Eigen::VectorXd& weights,
                                                     std::size_t m, RngStream& rng) {
  const auto n = static_cast<std::size_t>(weights.size());
  if (n == 0) throw StructuralError("cannot resample an empty weight vector");
  std::vector<double> cumulative(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) cumulative[i] = (total += weights[static_cast<Eigen::Index>(i)]);
  if (!(total > 0.0)) throw DegenerateWeightsError("all resampling weights are zero");
  std::vector<std::size_t> counts(n, 0);
  for (std::size_t r = 0; r < m; ++r) {
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), rng.uniform() * total);
    ++counts[it == cumulative.end() ? n - 1 : static_cast<std::size_t>(it - cumulative.begin())];
  }
  return counts;
}

WeightedEnsemble residual_resample(const WeightedEnsemble& ens, RngStream& rng) {
  return expand_counts(ens.particles(),
                       residual_resample_counts(ens.weights(), static_cast<std::size_t>(ens.size()), rng));
}

WeightedEnsemble resample(const WeightedEnsemble& ens, ResamplingKind kind, RngStream& rng) {
  if (kind == ResamplingKind::residual) return residual_resample(ens, rng);
  return expand_counts(ens.particles(), multinomial_resample_counts(
                                            ens.weights(), static_cast<std::size_t>(ens.size()), rng));
}

Eigen::VectorXd particle_log_likelihoods(const Matrix& particles, const Datum& datum,
                                         const LossComponent& loss, double lambda,
                                         unsigned workers) {
  if (!(lambda > 0.0)) throw ConfigError("lambda", "must be positive");
  Eigen::VectorXd ll(particles.cols());
  detail::parallel_for(static_cast<std::size_t>(particles.cols()), workers, [&](std::size_t i) {
    const auto col = static_cast<Eigen::Index>(i);
    ll[col] = safe_log_likelihood(loss, particles.col(col), datum, lambda);
  });
  return ll;
}

Eigen::VectorXd weight_update(const Matrix& particles, const Datum& datum,
                              const LossComponent& loss, double lambda, unsigned workers) {
  return normalize_log_weights(particle_log_likelihoods(particles, datum, loss, lambda, workers));
}

PerturbResult perturb_particles(const WeightedEnsemble& ens, const Datum& datum,
                                const LossComponent& loss, double lambda, double scale,
                                const Matrix& V, const RngStream& rng, std::size_t k,
                                unsigned workers) {
  const Eigen::Index d = ens.dim();
  if (V.rows() != d || V.cols() != d) throw StructuralError("perturbation covariance has the wrong shape");
  Matrix proposal = scale * scale * symmetrize(V);
  proposal.diagonal().array() += 1e-12;
  const Matrix factor = psd_factor(proposal);

  Matrix moved = ens.particles();
  std::vector<char> accepted(static_cast<std::size_t>(ens.size()), 0);
  detail::parallel_for(static_cast<std::size_t>(ens.size()), workers, [&](std::size_t i) {
    const auto col = static_cast<Eigen::Index>(i);
    RngStream r = rng.substream(k, i);
    const ParameterVector candidate = moved.col(col) + factor * r.normal_vector(d);
    const double v = r.uniform();
    const double current = safe_log_likelihood(loss, moved.col(col), datum, lambda);
    const double proposed = safe_log_likelihood(loss, candidate, datum, lambda);
    if (accept_move(current, proposed, v)) {
      moved.col(col) = candidate;
      accepted[i] = 1;
    }
  });
  return PerturbResult{WeightedEnsemble(std::move(moved), ens.weights()),
                       static_cast<std::size_t>(std::count(accepted.begin(), accepted.end(), 1))};
}

namespace {

Eigen::VectorXd weights_or_uniform(const Matrix& particles, const Datum& datum,
                                   const LossComponent& loss, const PfsoConfig& cfg,
                                   bool& degenerate) {
  try {
    degenerate = false;
    return weight_update(particles, datum, loss, cfg.lambda, cfg.workers);
  } catch (const DegenerateWeightsError&) {
    degenerate = true;
    return Eigen::VectorXd::Constant(particles.cols(), 1.0 / static_cast<double>(particles.cols()));
  }
}

}  // namespace

PfsoStep ks_pfso_step(const PfsoState& state, const Datum& datum, const LossComponent& loss,
                      const PfsoConfig& cfg, const RngStream& rng) {
  cfg.validate();
  const std::size_t k = state.k + 1;
  Matrix moved = liu_west_propagate(state, cfg.rho, stage_stream(rng, Stage::propagate), cfg.workers);

  bool degenerate = false;
  Eigen::VectorXd w = weights_or_uniform(moved, datum, loss, cfg, degenerate);
  const WeightedEnsemble weighted(std::move(moved), std::move(w));

  ParameterVector mean = state.mean;
  Matrix cov = state.cov;
  if (!degenerate) {
    mean = ensemble_mean(weighted);
    cov = ensemble_covariance(weighted, mean);
  }
  RngStream rs = stage_stream(rng, Stage::resample).substream(k, 0);
  return PfsoStep{PfsoState{resample(weighted, cfg.resampling, rs), mean, std::move(cov), k},
                  mean, degenerate, 0};
}

PfsoStep rp_pfso_step(const PfsoState& state, const Datum& datum, const LossComponent& loss,
                      const PfsoConfig& cfg, const RngStream& rng) {
  cfg.validate();
  const std::size_t k = state.k + 1;
  Matrix moved = liu_west_propagate(state, cfg.rho, stage_stream(rng, Stage::propagate), cfg.workers);

  bool degenerate = false;
  Eigen::VectorXd w = weights_or_uniform(moved, datum, loss, cfg, degenerate);
  const WeightedEnsemble weighted(std::move(moved), std::move(w));
  RngStream rs = stage_stream(rng, Stage::resample).substream(k, 0);
  const WeightedEnsemble resampled = resample(weighted, cfg.resampling, rs);

  PerturbResult perturbed =
      perturb_particles(resampled, datum, loss, cfg.lambda, cfg.perturbation_scale, state.cov,
                        stage_stream(rng, Stage::perturb), k, cfg.workers);

  ParameterVector mean = state.mean;
  Matrix cov = state.cov;
  if (!degenerate) {
    mean = ensemble_mean(perturbed.ensemble);
    cov = ensemble_covariance(perturbed.ensemble, mean);
  }
  return PfsoStep{PfsoState{std::move(perturbed.ensemble), mean, std::move(cov), k}, mean,
                  degenerate, perturbed.accepted};
}

}  // namespace filtopt
