#pragma once

#include <functional>
#include <optional>

#include "filtopt/ensemble.hpp"
#include "filtopt/loss.hpp"

namespace filtopt {

/// N(mean, cov) state of the Kalman-type optimizers.
struct GaussianBelief {
  ParameterVector mean;
  Matrix cov;

  void validate() const;
};

struct ProxConfig {
  double lambda = 0.1;
  int max_iterations = 50;
  double tolerance = 1e-8;
  /// Metric of the proximal term; held fixed over a vanilla-IPM run.
  Matrix V;

  void validate() const;
};

/// Closed-form prox of (y - x^T theta)^2 under the V^-1 metric.
ParameterVector ipm_linear_step(const ParameterVector& theta_prev, const Matrix& V,
                                const Datum& datum, double lambda);

/// Smooth function handed to the inner prox solver.
struct SmoothObjective {
  std::function<double(ConstVecRef)> value;
  std::function<ParameterVector(ConstVecRef)> gradient;
  std::function<Matrix(ConstVecRef)> hessian;
};

struct ProxResult {
  ParameterVector theta;
  int iterations = 0;
  bool converged = false;
  /// False when no iterate improved on theta_prev (theta_prev is returned).
  bool descended = true;
};

/// argmin f(theta) + lambda ||theta - theta_prev||^2_{V^-1} by damped Newton
/// with backtracking; falls back to a V-preconditioned gradient direction when
/// the Hessian is not positive definite. Never returns a point whose prox
/// objective exceeds the value at theta_prev. Domain errors at trial points
/// count as +inf; a domain error at theta_prev propagates.
ProxResult prox_solve(const SmoothObjective& f, const ParameterVector& theta_prev, const Matrix& V,
                      double lambda, int max_iterations = 50, double tolerance = 1e-8);

ProxResult ipm_nonlinear_step(const ParameterVector& theta_prev, const ProxConfig& cfg,
                              const LossComponent& loss, const Datum& datum);

/// Kalman measurement update for y ~ x^T theta with observation variance lambda.
GaussianBelief kf_ipm_step(const GaussianBelief& belief, const Datum& datum, double lambda);

/// Linearized update, a = grad h(mean).
GaussianBelief ekf_ipm_step(const GaussianBelief& belief, const Datum& datum, double lambda,
                            const ResidualModel& model);

/// Symmetric 2d+1 sigma set. kappa defaults to 3 - d.
struct UtParams {
  std::optional<double> kappa;

  double kappa_for(Eigen::Index d) const { return kappa ? *kappa : 3.0 - static_cast<double>(d); }
};

/// Unscented measurement update with observation variance lambda. The output
/// covariance gets 1e-12 I added whenever its smallest eigenvalue drops below 1e-12.
GaussianBelief ukf_ipm_step(const GaussianBelief& belief, const Datum& datum, double lambda,
                            const ResidualModel& model, const UtParams& ut = {});

/// Predicted measurement mean and variance under the unscented transform.
struct UtMoments {
  double mean;
  double variance;
};
UtMoments unscented_measurement(const GaussianBelief& belief, ConstVecRef x,
                                const ResidualModel& model, const UtParams& ut = {});

}  // namespace filtopt
