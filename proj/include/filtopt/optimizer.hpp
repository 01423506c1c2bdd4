#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "filtopt/adaline.hpp"
#include "filtopt/pfso.hpp"
#include "filtopt/proximal.hpp"

namespace filtopt {

enum class OptimizerKind { adaline, ipm, kf_ipm, ekf_ipm, ukf_ipm, ks_pfso, rp_pfso };

const char* to_string(OptimizerKind kind);
/// Accepts the names printed by to_string ("ks-pfso", "ekf-ipm", ...).
OptimizerKind optimizer_kind_from_string(const std::string& name);
const std::vector<OptimizerKind>& all_optimizer_kinds();
bool is_particle_filter(OptimizerKind kind);

struct OptimizerSettings {
  double lambda = 0.1;
  int ipm_max_iterations = 50;
  double ipm_tolerance = 1e-8;
  UtParams ut;
  PfsoConfig pfso;
};

/// Common driver interface: feed one datum per iteration.
class Optimizer {
 public:
  virtual ~Optimizer() = default;

  virtual OptimizerKind kind() const = 0;
  virtual void step(const Datum& datum) = 0;
  virtual const ParameterVector& estimate() const = 0;
  /// Current posterior covariance for the filtering methods.
  virtual std::optional<Matrix> covariance() const { return std::nullopt; }

  std::size_t iterations() const { return k_; }
  /// Iterations that hit a fallback: degenerate weights, or an inner solver
  /// that failed to descend.
  std::size_t flagged() const { return flagged_; }

 protected:
  std::size_t k_ = 0;
  std::size_t flagged_ = 0;
};

/// Throws ConfigError when the method cannot handle the loss (the KF family
/// needs a least-squares residual, KF-IPM a linear one).
std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, const LossComponent& loss,
                                          const ParameterVector& theta0, const Matrix& V0,
                                          const OptimizerSettings& settings, const RngStream& rng);

}  // namespace filtopt
