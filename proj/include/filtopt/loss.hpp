#pragma once

#include <functional>
#include <string>

#include "filtopt/ensemble.hpp"

namespace filtopt {

/// One training point. For the sigmoid and logistic models `x` excludes the
/// bias coordinate; theta = [alpha, beta].
struct Datum {
  Eigen::VectorXd x;
  double y = 0.0;
};

/// Numerically saturating logistic function.
double sigmoid(double z);
/// log(1 + exp(z)) without overflow.
double softplus(double z);

/// 1 / (1 + exp(-alpha - beta^T x)).
double sigmoid_h(ConstVecRef theta, ConstVecRef x);
ParameterVector sigmoid_h_gradient(ConstVecRef theta, ConstVecRef x);

/// Four-parameter model
///   (t1/x1) [sqrt(1 + (t2 + t3^2) t4 / t1^2) - x2] + (t1 + x3 t4) exp(x4 + sin t3).
/// Singular when |x1| < 1e-3, t1 == 0, or the square-root argument is negative
/// (the gradient additionally needs it strictly positive); throws DomainError.
double park_h(ConstVecRef theta, ConstVecRef x);
ParameterVector park_h_gradient(ConstVecRef theta, ConstVecRef x);

inline constexpr double kParkMinAbsX1 = 1e-3;

enum class ResidualKind { linear, sigmoid, park, custom };

/// y ~ h(theta; x) with gradient a = grad_theta h.
class ResidualModel {
 public:
  using ValueFn = std::function<double(ConstVecRef, ConstVecRef)>;
  using GradientFn = std::function<ParameterVector(ConstVecRef, ConstVecRef)>;

  /// h = x^T theta, x of dimension d.
  static ResidualModel linear(Eigen::Index d);
  /// h = sigmoid(alpha + beta^T x), x of dimension d - 1.
  static ResidualModel sigmoid(Eigen::Index d);
  static ResidualModel park();
  static ResidualModel custom(std::string name, Eigen::Index d, Eigen::Index feature_dim,
                              ValueFn value, GradientFn gradient);

  ResidualKind kind() const { return kind_; }
  Eigen::Index dim() const { return dim_; }
  Eigen::Index feature_dim() const { return feature_dim_; }
  const std::string& name() const { return name_; }

  double value(ConstVecRef theta, ConstVecRef x) const;
  ParameterVector gradient(ConstVecRef theta, ConstVecRef x) const;
  /// Second derivative of h; analytic for linear and sigmoid, central
  /// differences of the analytic gradient otherwise.
  Matrix hessian(ConstVecRef theta, ConstVecRef x) const;

 private:
  ResidualModel(ResidualKind kind, std::string name, Eigen::Index d, Eigen::Index feature_dim)
      : kind_(kind), name_(std::move(name)), dim_(d), feature_dim_(feature_dim) {}

  void check(ConstVecRef theta, ConstVecRef x) const;

  ResidualKind kind_;
  std::string name_;
  Eigen::Index dim_;
  Eigen::Index feature_dim_;
  ValueFn value_;
  GradientFn gradient_;
};

enum class LossKind { lq, logistic };

/// Per-datum loss f_k. LQ: (y - h(theta; x))^2. Logistic: log(1 + exp(-y (alpha + beta^T x))).
class LossComponent {
 public:
  static LossComponent least_squares(ResidualModel model);
  /// Logistic loss on bias-augmented theta of dimension d.
  static LossComponent logistic(Eigen::Index d);

  LossKind kind() const { return kind_; }
  Eigen::Index dim() const { return model_.dim(); }
  Eigen::Index feature_dim() const { return model_.feature_dim(); }
  /// For logistic losses this is the linear-score model alpha + beta^T x.
  const ResidualModel& model() const { return model_; }

 private:
  LossComponent(LossKind kind, ResidualModel model) : kind_(kind), model_(std::move(model)) {}

  LossKind kind_;
  ResidualModel model_;
};

double loss_value(const LossComponent& c, ConstVecRef theta, const Datum& datum);
ParameterVector loss_gradient(const LossComponent& c, ConstVecRef theta, const Datum& datum);
Matrix loss_hessian(const LossComponent& c, ConstVecRef theta, const Datum& datum);

/// log p(y | theta) = -f(theta) / lambda (unnormalized).
double log_likelihood(const LossComponent& c, ConstVecRef theta, const Datum& datum,
                      double lambda);

const char* to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

}  // namespace filtopt
