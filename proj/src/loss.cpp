#include "filtopt/loss.hpp"

#include <cmath>

#include <fmt/format.h>

namespace filtopt {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(0.0, z) + std::log1p(std::exp(-std::abs(z))); }

namespace {

double affine_score(ConstVecRef theta, ConstVecRef x) {
  return theta[0] + theta.tail(theta.size() - 1).dot(x);
}

ParameterVector augmented(ConstVecRef x) {
  ParameterVector xt(x.size() + 1);
  xt[0] = 1.0;
  xt.tail(x.size()) = x;
  return xt;
}

void check_sigmoid_dims(ConstVecRef theta, ConstVecRef x) {
  if (theta.size() != x.size() + 1)
    throw StructuralError(fmt::format("sigmoid model: theta has dimension {}, expected {}",
                                      theta.size(), x.size() + 1));
}

void check_park_dims(ConstVecRef theta, ConstVecRef x) {
  if (theta.size() != 4 || x.size() != 4)
    throw StructuralError("park model needs four parameters and four features");
}

struct ParkTerms {
  double q;     // t2 + t3^2
  double root;  // sqrt(1 + q t4 / t1^2)
  double expo;  // exp(x4 + sin t3)
};

ParkTerms park_terms(ConstVecRef theta, ConstVecRef x, bool strict) {
  check_park_dims(theta, x);
  if (std::abs(x[0]) < kParkMinAbsX1)
    throw DomainError(fmt::format("park model: |x1| = {:.3g} is below {}", std::abs(x[0]),
                                  kParkMinAbsX1));
  if (theta[0] == 0.0) throw DomainError("park model: theta1 is zero");
  const double q = theta[1] + theta[2] * theta[2];
  const double arg = 1.0 + q * theta[3] / (theta[0] * theta[0]);
  if (arg < 0.0 || (strict && arg == 0.0) || !std::isfinite(arg))
    throw DomainError(fmt::format("park model: square-root argument {:.3g} out of domain", arg));
  return {q, std::sqrt(arg), std::exp(x[3] + std::sin(theta[2]))};
}

}  // namespace

double sigmoid_h(ConstVecRef theta, ConstVecRef x) {
  check_sigmoid_dims(theta, x);
  return sigmoid(affine_score(theta, x));
}

ParameterVector sigmoid_h_gradient(ConstVecRef theta, ConstVecRef x) {
  check_sigmoid_dims(theta, x);
  const double s = sigmoid(affine_score(theta, x));
  return s * (1.0 - s) * augmented(x);
}

double park_h(ConstVecRef theta, ConstVecRef x) {
  const ParkTerms t = park_terms(theta, x, false);
  return theta[0] / x[0] * (t.root - x[1]) + (theta[0] + x[2] * theta[3]) * t.expo;
}

ParameterVector park_h_gradient(ConstVecRef theta, ConstVecRef x) {
  const ParkTerms t = park_terms(theta, x, true);
  const double t1 = theta[0];
  const double t3 = theta[2];
  const double t4 = theta[3];
  const double denom = x[0] * t1 * t.root;
  ParameterVector g(4);
  g[0] = (t.root - x[1]) / x[0] - t.q * t4 / (denom * t1) + t.expo;
  g[1] = t4 / (2.0 * denom);
  g[2] = t3 * t4 / denom + (t1 + x[2] * t4) * t.expo * std::cos(t3);
  g[3] = t.q / (2.0 * denom) + x[2] * t.expo;
  return g;
}

ResidualModel ResidualModel::linear(Eigen::Index d) {
  return ResidualModel(ResidualKind::linear, "linear", d, d);
}

ResidualModel ResidualModel::sigmoid(Eigen::Index d) {
  if (d < 1) throw StructuralError("sigmoid model needs d >= 1");
  return ResidualModel(ResidualKind::sigmoid, "sigmoid", d, d - 1);
}

ResidualModel ResidualModel::park() { return ResidualModel(ResidualKind::park, "park", 4, 4); }

ResidualModel ResidualModel::custom(std::string name, Eigen::Index d, Eigen::Index feature_dim,
                                    ValueFn value, GradientFn gradient) {
  ResidualModel m(ResidualKind::custom, std::move(name), d, feature_dim);
  m.value_ = std::move(value);
  m.gradient_ = std::move(gradient);
  return m;
}

void ResidualModel::check(ConstVecRef theta, ConstVecRef x) const {
  if (theta.size() != dim_ || x.size() != feature_dim_)
    throw StructuralError(fmt::format("{} model expects theta[{}] and x[{}], got theta[{}], x[{}]",
                                      name_, dim_, feature_dim_, theta.size(), x.size()));
}

double ResidualModel::value(ConstVecRef theta, ConstVecRef x) const {
  check(theta, x);
  switch (kind_) {
    case ResidualKind::linear: return x.dot(theta);
    case ResidualKind::sigmoid: return filtopt::sigmoid(affine_score(theta, x));
    case ResidualKind::park: return park_h(theta, x);
    case ResidualKind::custom: return value_(theta, x);
  }
  return 0.0;
}

ParameterVector ResidualModel::gradient(ConstVecRef theta, ConstVecRef x) const {
  check(theta, x);
  switch (kind_) {
    case ResidualKind::linear: return x;
    case ResidualKind::sigmoid: return sigmoid_h_gradient(theta, x);
    case ResidualKind::park: return park_h_gradient(theta, x);
    case ResidualKind::custom: return gradient_(theta, x);
  }
  return {};
}

Matrix ResidualModel::hessian(ConstVecRef theta, ConstVecRef x) const {
  check(theta, x);
  const Eigen::Index d = dim_;
  if (kind_ == ResidualKind::linear) return Matrix::Zero(d, d);
  if (kind_ == ResidualKind::sigmoid) {
    const double s = filtopt::sigmoid(affine_score(theta, x));
    const ParameterVector xt = augmented(x);
    return s * (1.0 - s) * (1.0 - 2.0 * s) * xt * xt.transpose();
  }
  Matrix h(d, d);
  ParameterVector probe = theta;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double step = 1e-6 * std::max(1.0, std::abs(theta[j]));
    probe[j] = theta[j] + step;
    const ParameterVector up = gradient(probe, x);
    probe[j] = theta[j] - step;
    const ParameterVector down = gradient(probe, x);
    probe[j] = theta[j];
    h.col(j) = (up - down) / (2.0 * step);
  }
  return symmetrize(h);
}

LossComponent LossComponent::least_squares(ResidualModel model) {
  return LossComponent(LossKind::lq, std::move(model));
}

LossComponent LossComponent::logistic(Eigen::Index d) {
  if (d < 1) throw StructuralError("logistic loss needs d >= 1");
  auto score = ResidualModel::custom(
      "affine", d, d - 1, [](ConstVecRef t, ConstVecRef x) { return affine_score(t, x); },
      [](ConstVecRef, ConstVecRef x) { return augmented(x); });
  return LossComponent(LossKind::logistic, std::move(score));
}

namespace {

double logistic_margin(const LossComponent& c, ConstVecRef theta, const Datum& datum) {
  if (theta.size() != c.dim() || datum.x.size() != c.feature_dim())
    throw StructuralError(fmt::format("logistic loss expects theta[{}] and x[{}], got {} and {}",
                                      c.dim(), c.feature_dim(), theta.size(), datum.x.size()));
  return datum.y * affine_score(theta, datum.x);
}

}  // namespace

double loss_value(const LossComponent& c, ConstVecRef theta, const Datum& datum) {
  if (c.kind() == LossKind::logistic) return softplus(-logistic_margin(c, theta, datum));
  const double r = datum.y - c.model().value(theta, datum.x);
  return r * r;
}

ParameterVector loss_gradient(const LossComponent& c, ConstVecRef theta, const Datum& datum) {
  if (c.kind() == LossKind::logistic) {
    const double m = logistic_margin(c, theta, datum);
    return -datum.y * sigmoid(-m) * augmented(datum.x);
  }
  const double r = datum.y - c.model().value(theta, datum.x);
  return -2.0 * r * c.model().gradient(theta, datum.x);
}

Matrix loss_hessian(const LossComponent& c, ConstVecRef theta, const Datum& datum) {
  if (c.kind() == LossKind::logistic) {
    const double m = logistic_margin(c, theta, datum);
    const ParameterVector xt = augmented(datum.x);
    return sigmoid(m) * sigmoid(-m) * xt * xt.transpose();
  }
  const double r = datum.y - c.model().value(theta, datum.x);
  const ParameterVector a = c.model().gradient(theta, datum.x);
  return 2.0 * a * a.transpose() - 2.0 * r * c.model().hessian(theta, datum.x);
}

double log_likelihood(const LossComponent& c, ConstVecRef theta, const Datum& datum,
                      double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("lambda", "must be positive");
  return -loss_value(c, theta, datum) / lambda;
}

const char* to_string(LossKind kind) { return kind == LossKind::lq ? "lq" : "logistic"; }

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "lq") return LossKind::lq;
  if (name == "logistic") return LossKind::logistic;
  throw ConfigError("loss", "unknown loss kind '" + name + "' (expected lq or logistic)");
}

}  // namespace filtopt
