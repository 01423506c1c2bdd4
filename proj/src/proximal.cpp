#include "filtopt/proximal.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace filtopt {

void GaussianBelief::validate() const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size())
    throw StructuralError(fmt::format("belief covariance is {}x{}, mean has dimension {}",
                                      cov.rows(), cov.cols(), mean.size()));
  if (!mean.allFinite() || !cov.allFinite()) throw NumericError("belief is not finite");
  if (!(cov - cov.transpose()).isZero(1e-10)) throw NumericError("belief covariance is not symmetric");
}

void ProxConfig::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("lambda", "must be positive");
  if (max_iterations < 1) throw ConfigError("ipm.max_iterations", "must be >= 1");
  if (!(tolerance > 0.0)) throw ConfigError("ipm.tolerance", "must be positive");
  if (V.rows() != V.cols()) throw StructuralError("V must be square");
}

ParameterVector ipm_linear_step(const ParameterVector& theta_prev, const Matrix& V,
                                const Datum& datum, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("lambda", "must be positive");
  if (datum.x.size() != theta_prev.size() || V.rows() != theta_prev.size() ||
      V.cols() != theta_prev.size())
    throw StructuralError("linear IPM step: inconsistent dimensions");
  const ParameterVector vx = V * datum.x;
  const double residual = datum.y - datum.x.dot(theta_prev);
  return theta_prev + vx * (residual / (lambda + datum.x.dot(vx)));
}

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxHalvings = 60;

}  // namespace

ProxResult prox_solve(const SmoothObjective& f, const ParameterVector& theta_prev, const Matrix& V,
                      double lambda, int max_iterations, double tolerance) {
  if (!(lambda > 0.0)) throw ConfigError("lambda", "must be positive");
  const Eigen::Index d = theta_prev.size();
  if (V.rows() != d || V.cols() != d) throw StructuralError("prox metric V has wrong shape");

  ProxResult result{theta_prev, 0, false, true};
  if (V.isZero(0.0)) {
    result.converged = true;
    return result;
  }
  Eigen::LLT<Matrix> v_llt(V);
  if (v_llt.info() != Eigen::Success) throw NumericError("prox metric V is not positive definite");
  const Matrix v_inv = v_llt.solve(Matrix::Identity(d, d));
  const Matrix penalty_hessian = 2.0 * lambda * v_inv;

  auto objective = [&](const ParameterVector& theta) {
    const ParameterVector delta = theta - theta_prev;
    return f.value(theta) + lambda * delta.dot(v_inv * delta);
  };
  auto safe_objective = [&](const ParameterVector& theta) {
    try {
      const double v = objective(theta);
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const double start_value = objective(theta_prev);
  ParameterVector theta = theta_prev;
  double current = start_value;

  for (int it = 0; it < max_iterations; ++it) {
    ParameterVector grad;
    Matrix hess;
    try {
      grad = f.gradient(theta) + penalty_hessian * (theta - theta_prev);
      if (grad.norm() < tolerance) {
        result.converged = true;
        break;
      }
      hess = f.hessian(theta) + penalty_hessian;
    } catch (const DomainError&) {
      break;
    }
    result.iterations = it + 1;

    ParameterVector newton;
    bool have_newton = false;
    if (hess.allFinite()) {
      Eigen::LLT<Matrix> llt(symmetrize(hess));
      if (llt.info() == Eigen::Success) {
        newton = -llt.solve(grad);
        have_newton = newton.allFinite() && grad.dot(newton) < 0.0;
      }
    }
    const ParameterVector fallback = -(V * grad) / (2.0 * lambda);

    bool accepted = false;
    for (int attempt = have_newton ? 0 : 1; attempt < 2 && !accepted; ++attempt) {
      const ParameterVector& dir = attempt == 0 ? newton : fallback;
      const double slope = grad.dot(dir);
      double t = 1.0;
      for (int h = 0; h < kMaxHalvings; ++h, t *= 0.5) {
        const ParameterVector trial = theta + t * dir;
        const double value = safe_objective(trial);
        if (value <= current + kArmijo * t * slope && value < current) {
          theta = trial;
          current = value;
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) break;
  }

  result.theta = theta;
  result.descended = result.converged || current < start_value;
  return result;
}

ProxResult ipm_nonlinear_step(const ParameterVector& theta_prev, const ProxConfig& cfg,
                              const LossComponent& loss, const Datum& datum) {
  cfg.validate();
  SmoothObjective f{
      [&](ConstVecRef t) { return loss_value(loss, t, datum); },
      [&](ConstVecRef t) { return loss_gradient(loss, t, datum); },
      [&](ConstVecRef t) { return loss_hessian(loss, t, datum); },
  };
  return prox_solve(f, theta_prev, cfg.V, cfg.lambda, cfg.max_iterations, cfg.tolerance);
}

namespace {

GaussianBelief rank_one_update(const GaussianBelief& belief, const ParameterVector& a,
                               double residual, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("lambda", "must be positive");
  const ParameterVector va = belief.cov * a;
  const double s = lambda + a.dot(va);
  GaussianBelief out;
  out.mean = belief.mean + va * (residual / s);
  out.cov = symmetrize(belief.cov - va * va.transpose() / s);
  return out;
}

void floor_covariance(Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericError("covariance eigendecomposition failed");
  if (eig.eigenvalues().minCoeff() < 1e-12) cov.diagonal().array() += 1e-12;
}

struct SigmaSet {
  Matrix points;  // d x (2d + 1)
  double w0;
  double wi;
};

SigmaSet sigma_points(const GaussianBelief& belief, const UtParams& ut) {
  const Eigen::Index d = belief.mean.size();
  const double kappa = ut.kappa_for(d);
  const double c = static_cast<double>(d) + kappa;
  if (!(c > 0.0)) throw ConfigError("ukf.kappa", "d + kappa must be positive");
  const Matrix spread = std::sqrt(c) * psd_factor(belief.cov);
  SigmaSet s{Matrix(d, 2 * d + 1), kappa / c, 1.0 / (2.0 * c)};
  s.points.col(0) = belief.mean;
  for (Eigen::Index j = 0; j < d; ++j) {
    s.points.col(1 + j) = belief.mean + spread.col(j);
    s.points.col(1 + d + j) = belief.mean - spread.col(j);
  }
  return s;
}

}  // namespace

GaussianBelief kf_ipm_step(const GaussianBelief& belief, const Datum& datum, double lambda) {
  if (datum.x.size() != belief.mean.size())
    throw StructuralError("KF-IPM step: feature and parameter dimensions differ");
  return rank_one_update(belief, datum.x, datum.y - datum.x.dot(belief.mean), lambda);
}

GaussianBelief ekf_ipm_step(const GaussianBelief& belief, const Datum& datum, double lambda,
                            const ResidualModel& model) {
  const ParameterVector a = model.gradient(belief.mean, datum.x);
  const double residual = datum.y - model.value(belief.mean, datum.x);
  return rank_one_update(belief, a, residual, lambda);
}

UtMoments unscented_measurement(const GaussianBelief& belief, ConstVecRef x,
                                const ResidualModel& model, const UtParams& ut) {
  const SigmaSet s = sigma_points(belief, ut);
  const Eigen::Index n = s.points.cols();
  Eigen::VectorXd z(n);
  for (Eigen::Index j = 0; j < n; ++j) z[j] = model.value(s.points.col(j), x);
  const double mean = s.w0 * z[0] + s.wi * z.tail(n - 1).sum();
  const Eigen::VectorXd dz = z.array() - mean;
  const double var = s.w0 * dz[0] * dz[0] + s.wi * dz.tail(n - 1).squaredNorm();
  return {mean, var};
}

GaussianBelief ukf_ipm_step(const GaussianBelief& belief, const Datum& datum, double lambda,
                            const ResidualModel& model, const UtParams& ut) {
  if (!(lambda > 0.0)) throw ConfigError("lambda", "must be positive");
  const SigmaSet s = sigma_points(belief, ut);
  const Eigen::Index n = s.points.cols();
  Eigen::VectorXd z(n);
  for (Eigen::Index j = 0; j < n; ++j) z[j] = model.value(s.points.col(j), datum.x);

  const double z_mean = s.w0 * z[0] + s.wi * z.tail(n - 1).sum();
  double pzz = 0.0;
  ParameterVector pxz = ParameterVector::Zero(belief.mean.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    const double w = j == 0 ? s.w0 : s.wi;
    const double dz = z[j] - z_mean;
    pzz += w * dz * dz;
    pxz += w * dz * (s.points.col(j) - belief.mean);
  }
  const double innovation_var = pzz + lambda;
  if (!(innovation_var > 0.0)) throw NumericError("UKF innovation variance is not positive");

  const ParameterVector gain = pxz / innovation_var;
  GaussianBelief out;
  out.mean = belief.mean + gain * (datum.y - z_mean);
  out.cov = symmetrize(belief.cov - gain * gain.transpose() * innovation_var);
  floor_covariance(out.cov);
  return out;
}

}  // namespace filtopt
