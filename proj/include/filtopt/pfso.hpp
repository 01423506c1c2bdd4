#pragma once

#include <cstddef>
#include <vector>

#include "filtopt/ensemble.hpp"
#include "filtopt/loss.hpp"

namespace filtopt {

enum class ResamplingKind { residual, multinomial };

struct PfsoConfig {
  std::size_t particles = 500;
  double lambda = 0.1;
  /// Liu-West shrinkage; the kernel variance factor is 1 - rho^2.
  double rho = 0.98;
  /// RP-PFSO proposal is N(theta_i, s^2 V + 1e-12 I).
  double perturbation_scale = 0.2;
  ResamplingKind resampling = ResamplingKind::residual;
  /// Per-particle work is split across this many threads inside a step.
  unsigned workers = 1;

  double gamma() const { return 1.0 - rho * rho; }
  void validate() const;
};

struct PfsoState {
  WeightedEnsemble ensemble;
  ParameterVector mean;
  Matrix cov;
  std::size_t k = 0;
};

struct PfsoStep {
  PfsoState state;
  ParameterVector estimate;
  /// Every weight underflowed; moments were left unchanged.
  bool degenerate = false;
  std::size_t accepted_moves = 0;
};

/// N particles from N(theta0, V0) with uniform weights; m = theta0, V = V0, k = 0.
PfsoState init_state(const ParameterVector& theta0, const Matrix& V0, std::size_t n,
                     const RngStream& rng);

/// rho theta_i + (1 - rho) m + eps_i with eps_i ~ N(0, (1 - rho^2) V). Particle i
/// of iteration state.k + 1 draws from rng.substream(state.k + 1, i).
Matrix liu_west_propagate(const PfsoState& state, double rho, const RngStream& rng,
                          unsigned workers = 1);

/// Offspring counts: floor(M w_i) deterministic copies, the remaining slots
/// drawn multinomially from the residual weights. Sums to M exactly.
std::vector<std::size_t> residual_resample_counts(const Eigen::VectorXd& weights, std::size_t m,
                                                  RngStream& rng);
std::vector<std::size_t> multinomial_resample_counts(const Eigen::VectorXd& weights,
                                                     std::size_t m, RngStream& rng);

/// Equally weighted ensemble of the same size, copies laid out in particle order.
WeightedEnsemble residual_resample(const WeightedEnsemble& ens, RngStream& rng);
WeightedEnsemble resample(const WeightedEnsemble& ens, ResamplingKind kind, RngStream& rng);

/// Per-particle -f(theta_i)/lambda; particles in the model's singular set get -inf.
Eigen::VectorXd particle_log_likelihoods(const Matrix& particles, const Datum& datum,
                                         const LossComponent& loss, double lambda,
                                         unsigned workers = 1);

/// Normalized weights proportional to exp(-f(theta_i)/lambda), assuming equal
/// incoming weights. Throws DegenerateWeightsError when all underflow.
Eigen::VectorXd weight_update(const Matrix& particles, const Datum& datum,
                              const LossComponent& loss, double lambda, unsigned workers = 1);

struct PerturbResult {
  WeightedEnsemble ensemble;
  std::size_t accepted = 0;
};

/// Metropolis-style move per particle: candidate from N(theta_i, s^2 V + 1e-12 I),
/// accepted when v <= min(1, p(y | candidate) / p(y | theta_i)), v ~ U[0, 1).
/// Particle i draws from rng.substream(k, i). Weights are carried over.
PerturbResult perturb_particles(const WeightedEnsemble& ens, const Datum& datum,
                                const LossComponent& loss, double lambda, double scale,
                                const Matrix& V, const RngStream& rng, std::size_t k,
                                unsigned workers = 1);

/// Kernel-smoothing PFSO: propagate, weight, estimate, moment update, resample.
/// The estimate is the weighted mean before resampling.
PfsoStep ks_pfso_step(const PfsoState& state, const Datum& datum, const LossComponent& loss,
                      const PfsoConfig& cfg, const RngStream& rng);

/// Random-perturbation PFSO: propagate, weight, resample, perturb, estimate,
/// moment update. The estimate is the (uniformly weighted) mean after perturbation.
PfsoStep rp_pfso_step(const PfsoState& state, const Datum& datum, const LossComponent& loss,
                      const PfsoConfig& cfg, const RngStream& rng);

}  // namespace filtopt
