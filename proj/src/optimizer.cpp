#include "filtopt/optimizer.hpp"

#include <array>
#include <utility>

#include <fmt/format.h>

namespace filtopt {

namespace {

constexpr std::array<std::pair<OptimizerKind, const char*>, 7> kNames{{
    {OptimizerKind::adaline, "adaline"},
    {OptimizerKind::ipm, "ipm"},
    {OptimizerKind::kf_ipm, "kf-ipm"},
    {OptimizerKind::ekf_ipm, "ekf-ipm"},
    {OptimizerKind::ukf_ipm, "ukf-ipm"},
    {OptimizerKind::ks_pfso, "ks-pfso"},
    {OptimizerKind::rp_pfso, "rp-pfso"},
}};

class AdalineOptimizer final : public Optimizer {
 public:
  explicit AdalineOptimizer(const ParameterVector& theta0) : state_{theta0, 1} {}

  OptimizerKind kind() const override { return OptimizerKind::adaline; }
  void step(const Datum& datum) override {
    state_ = adaline_step(state_, datum);
    ++k_;
  }
  const ParameterVector& estimate() const override { return state_.theta; }

 private:
  AdalineState state_;
};

class IpmOptimizer final : public Optimizer {
 public:
  IpmOptimizer(const LossComponent& loss, const ParameterVector& theta0, const Matrix& V0,
               const OptimizerSettings& s)
      : loss_(loss), theta_(theta0) {
    cfg_.lambda = s.lambda;
    cfg_.max_iterations = s.ipm_max_iterations;
    cfg_.tolerance = s.ipm_tolerance;
    cfg_.V = V0;
    cfg_.validate();
    closed_form_ = loss.kind() == LossKind::lq && loss.model().kind() == ResidualKind::linear;
  }

  OptimizerKind kind() const override { return OptimizerKind::ipm; }
  void step(const Datum& datum) override {
    if (closed_form_) {
      theta_ = ipm_linear_step(theta_, cfg_.V, datum, cfg_.lambda);
    } else {
      ProxResult r = ipm_nonlinear_step(theta_, cfg_, loss_, datum);
      if (!r.descended) ++flagged_;
      theta_ = std::move(r.theta);
    }
    ++k_;
  }
  const ParameterVector& estimate() const override { return theta_; }

 private:
  LossComponent loss_;
  ProxConfig cfg_;
  ParameterVector theta_;
  bool closed_form_ = false;
};

class KalmanOptimizer final : public Optimizer {
 public:
  KalmanOptimizer(OptimizerKind kind, const LossComponent& loss, const ParameterVector& theta0,
                  const Matrix& V0, const OptimizerSettings& s)
      : kind_(kind), model_(loss.model()), belief_{theta0, symmetrize(V0)}, lambda_(s.lambda), ut_(s.ut) {
    if (loss.kind() != LossKind::lq)
      throw ConfigError("optimizers", fmt::format("{} needs a least-squares loss", to_string(kind)));
    if (kind == OptimizerKind::kf_ipm && model_.kind() != ResidualKind::linear)
      throw ConfigError("optimizers", "kf-ipm needs a linear residual model");
    if (!(lambda_ > 0.0)) throw ConfigError("lambda", "must be positive");
    belief_.validate();
  }

  OptimizerKind kind() const override { return kind_; }
  void step(const Datum& datum) override {
    switch (kind_) {
      case OptimizerKind::kf_ipm: belief_ = kf_ipm_step(belief_, datum, lambda_); break;
      case OptimizerKind::ekf_ipm: belief_ = ekf_ipm_step(belief_, datum, lambda_, model_); break;
      default: belief_ = ukf_ipm_step(belief_, datum, lambda_, model_, ut_); break;
    }
    if (!belief_.mean.allFinite() || !belief_.cov.allFinite())
      throw NumericError(fmt::format("{} produced a non-finite belief at iteration {}", to_string(kind_), k_ + 1));
    ++k_;
  }
  const ParameterVector& estimate() const override { return belief_.mean; }
  std::optional<Matrix> covariance() const override { return belief_.cov; }

 private:
  OptimizerKind kind_;
  ResidualModel model_;
  GaussianBelief belief_;
  double lambda_;
  UtParams ut_;
};

class PfsoOptimizer final : public Optimizer {
 public:
  PfsoOptimizer(OptimizerKind kind, const LossComponent& loss, const ParameterVector& theta0,
                const Matrix& V0, const OptimizerSettings& s, const RngStream& rng)
      : kind_(kind), loss_(loss), cfg_(s.pfso), rng_(rng),
        state_(init_state(theta0, V0, s.pfso.particles, rng)), estimate_(theta0) {
    cfg_.lambda = s.lambda;
    cfg_.validate();
  }

  OptimizerKind kind() const override { return kind_; }
  void step(const Datum& datum) override {
    PfsoStep r = kind_ == OptimizerKind::ks_pfso ? ks_pfso_step(state_, datum, loss_, cfg_, rng_)
                                                 : rp_pfso_step(state_, datum, loss_, cfg_, rng_);
    if (r.degenerate) ++flagged_;
    state_ = std::move(r.state);
    estimate_ = std::move(r.estimate);
    accepted_ += r.accepted_moves;
    ++k_;
  }
  const ParameterVector& estimate() const override { return estimate_; }
  std::optional<Matrix> covariance() const override { return state_.cov; }

 private:
  OptimizerKind kind_;
  LossComponent loss_;
  PfsoConfig cfg_;
  RngStream rng_;
  PfsoState state_;
  ParameterVector estimate_;
  std::size_t accepted_ = 0;
};

}  // namespace

const char* to_string(OptimizerKind kind) {
  for (const auto& [k, name] : kNames)
    if (k == kind) return name;
  return "unknown";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  for (const auto& [k, n] : kNames)
    if (name == n) return k;
  throw ConfigError("optimizers", fmt::format("unknown optimizer '{}'", name));
}

const std::vector<OptimizerKind>& all_optimizer_kinds() {
  static const std::vector<OptimizerKind> kinds = [] {
    std::vector<OptimizerKind> v;
    for (const auto& entry : kNames) v.push_back(entry.first);
    return v;
  }();
  return kinds;
}

bool is_particle_filter(OptimizerKind kind) {
  return kind == OptimizerKind::ks_pfso || kind == OptimizerKind::rp_pfso;
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, const LossComponent& loss,
                                          const ParameterVector& theta0, const Matrix& V0,
                                          const OptimizerSettings& settings, const RngStream& rng) {
  if (theta0.size() != loss.dim())
    throw StructuralError(fmt::format("theta0 has dimension {}, loss expects {}", theta0.size(), loss.dim()));
  if (!theta0.allFinite()) throw NumericError("theta0 is not finite");
  switch (kind) {
    case OptimizerKind::adaline:
      return std::make_unique<AdalineOptimizer>(theta0);
    case OptimizerKind::ipm:
      return std::make_unique<IpmOptimizer>(loss, theta0, V0, settings);
    case OptimizerKind::kf_ipm:
    case OptimizerKind::ekf_ipm:
    case OptimizerKind::ukf_ipm:
      return std::make_unique<KalmanOptimizer>(kind, loss, theta0, V0, settings);
    case OptimizerKind::ks_pfso:
    case OptimizerKind::rp_pfso:
      return std::make_unique<PfsoOptimizer>(kind, loss, theta0, V0, settings, rng);
  }
  throw ConfigError("optimizers", "unhandled optimizer kind");
}

}  // namespace filtopt
