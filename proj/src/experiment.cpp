#include "filtopt/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "filtopt/metrics.hpp"
#include "parallel.hpp"

namespace filtopt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Substream keys below a repetition or fold seed.
enum Key : std::uint64_t { kTruth = 1, kData = 2, kInit = 3, kIndex = 4, kOptimizer = 5 };

std::vector<std::size_t> draw_indices(std::size_t count, std::size_t n, RngStream& rng) {
  std::vector<std::size_t> idx(count);
  for (auto& j : idx) j = std::min(n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)));
  return idx;
}

LossComponent synthetic_loss(const SyntheticSpec& spec) {
  return LossComponent::least_squares(spec.model == SyntheticModel::park ? ResidualModel::park()
                                                                          : ResidualModel::sigmoid(2));
}

}  // namespace

const char* to_string(SyntheticModel model) {
  return model == SyntheticModel::park ? "park" : "sigmoid";
}

std::vector<std::size_t> default_checkpoints(std::size_t iterations) {
  std::vector<std::size_t> out;
  for (std::size_t k : {1, 4, 7, 10, 100, 1000, 3000})
    if (k <= iterations) out.push_back(k);
  if (out.empty() || out.back() != iterations) out.push_back(iterations);
  return out;
}

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw ConfigError("repetitions", "must be >= 1");
  if (iterations < 1) throw ConfigError("iterations", "must be >= 1");
  if (optimizers.empty()) throw ConfigError("optimizers", "list at least one optimizer");
  for (std::size_t k : checkpoints)
    if (k < 1 || k > iterations)
      throw ConfigError("checkpoints", fmt::format("{} lies outside [1, {}]", k, iterations));
  if (!(settings.lambda > 0.0)) throw ConfigError("lambda", "must be positive");
  if (synthetic.samples < 1) throw ConfigError("synthetic.samples", "must be >= 1");
  if (synthetic.theta_true && synthetic.theta_true->size() != synthetic.dim())
    throw ConfigError("synthetic.theta_true",
                      fmt::format("the {} model needs {} entries", to_string(synthetic.model), synthetic.dim()));
  if (!(synthetic.theta_true_low <= synthetic.theta_true_high))
    throw ConfigError("synthetic.theta_true_range", "low exceeds high");
  if (!(synthetic.init_width >= 0.0)) throw ConfigError("synthetic.init_width", "must be non-negative");
  if (!(synthetic.prior_variance > 0.0)) throw ConfigError("synthetic.prior_variance", "must be positive");
  if (synthetic.noise_variance && !(*synthetic.noise_variance >= 0.0))
    throw ConfigError("synthetic.noise_variance", "must be non-negative");
  PfsoConfig pf = settings.pfso;
  pf.lambda = settings.lambda;
  pf.validate();
}

double RunTrace::min_cost() const {
  double best = std::numeric_limits<double>::infinity();
  for (double c : cost) best = std::min(best, c);
  return best;
}

std::vector<const RunTrace*> ExperimentResult::runs_for(OptimizerKind kind) const {
  std::vector<const RunTrace*> out;
  for (const auto& r : runs)
    if (r.optimizer == kind) out.push_back(&r);
  return out;
}

const AggregateTrace& ExperimentResult::aggregate(OptimizerKind kind) const {
  for (const auto& a : aggregates)
    if (a.optimizer == kind) return a;
  throw StructuralError(fmt::format("no aggregate for {}", to_string(kind)));
}

std::vector<RunTrace> run_repetition(const ExperimentConfig& cfg, std::size_t repetition) {
  const std::uint64_t seed = derive_seed(cfg.seed, repetition);
  const RngStream base(seed);
  const SyntheticSpec& spec = cfg.synthetic;
  const Eigen::Index d = spec.dim();

  RngStream truth_rng = base.substream(kTruth, 0);
  ParameterVector theta_true(d);
  if (spec.theta_true) {
    theta_true = *spec.theta_true;
  } else {
    for (Eigen::Index j = 0; j < d; ++j)
      theta_true[j] = spec.theta_true_low + (spec.theta_true_high - spec.theta_true_low) * truth_rng.uniform();
  }

  const double noise = spec.noise_variance.value_or(cfg.settings.lambda);
  RngStream data_rng = base.substream(kData, 0);
  const Dataset ds = spec.model == SyntheticModel::park ? gen_park_data(theta_true, spec.samples, noise, data_rng, spec.min_abs_x1)
                                                        : gen_sigmoid_data(theta_true, spec.samples, noise, data_rng);

  RngStream init_rng = base.substream(kInit, 0);
  ParameterVector theta0(d);
  for (Eigen::Index j = 0; j < d; ++j)
    theta0[j] = theta_true[j] + spec.init_width * (2.0 * init_rng.uniform() - 1.0);
  const Matrix V0 = spec.prior_variance * Matrix::Identity(d, d);

  RngStream index_rng = base.substream(kIndex, 0);
  const auto indices = draw_indices(cfg.iterations, ds.size(), index_rng);
  const LossComponent loss = synthetic_loss(spec);

  std::vector<std::size_t> checkpoints = cfg.checkpoints.empty() ? default_checkpoints(cfg.iterations) : cfg.checkpoints;
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());

  std::vector<RunTrace> traces;
  for (OptimizerKind kind : cfg.optimizers) {
    RunTrace t;
    t.optimizer = kind;
    t.repetition = repetition;
    t.seed = seed;
    try {
      t.c0 = mean_cost(ds.data, loss, theta0);
      if (!(t.c0 > 0.0) || !std::isfinite(t.c0))
        throw NumericError(fmt::format("initial cost {} cannot normalize", t.c0));
      auto opt = make_optimizer(kind, loss, theta0, V0, cfg.settings,
                                base.substream(kOptimizer, static_cast<std::uint64_t>(kind)));
      auto record = [&](std::size_t k) {
        const double c = k == 0 ? t.c0 : mean_cost(ds.data, loss, opt->estimate());
        t.k.push_back(k);
        t.cost.push_back(c);
        t.nc.push_back(c / t.c0);
        const auto cov = opt->covariance();
        t.vsum.push_back(cov ? v_sum(*cov) : kNaN);
      };
      record(0);
      std::size_t next = 0;
      for (std::size_t k = 1; k <= cfg.iterations; ++k) {
        opt->step(ds.data[indices[k - 1]]);
        if (next < checkpoints.size() && checkpoints[next] == k) {
          record(k);
          ++next;
        }
      }
      t.flagged = opt->flagged();
      t.final_theta = opt->estimate();
      if (!t.final_theta.allFinite() || !std::isfinite(t.cost.back()))
        throw NumericError("run ended with a non-finite estimate or cost");
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      t.failed = true;
      t.error = e.what();
    }
    traces.push_back(std::move(t));
  }
  return traces;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<RunTrace>> per_rep(cfg.repetitions);
  detail::parallel_tasks(cfg.repetitions, cfg.workers,
                         [&](std::size_t r) { per_rep[r] = run_repetition(cfg, r); });

  ExperimentResult result;
  for (auto& rep : per_rep)
    for (auto& t : rep) result.runs.push_back(std::move(t));

  for (OptimizerKind kind : cfg.optimizers) {
    AggregateTrace agg;
    agg.optimizer = kind;
    for (const RunTrace* t : result.runs_for(kind)) {
      if (t->failed) {
        ++agg.failures;
        continue;
      }
      if (agg.runs == 0) {
        agg.k = t->k;
        agg.mean_nc.assign(t->k.size(), 0.0);
        agg.mean_vsum.assign(t->k.size(), 0.0);
      }
      for (std::size_t i = 0; i < t->k.size(); ++i) {
        agg.mean_nc[i] += t->nc[i];
        agg.mean_vsum[i] += t->vsum[i];
      }
      ++agg.runs;
    }
    for (std::size_t i = 0; i < agg.k.size(); ++i) {
      agg.mean_nc[i] /= static_cast<double>(agg.runs);
      agg.mean_vsum[i] /= static_cast<double>(agg.runs);
    }
    result.aggregates.push_back(std::move(agg));
  }
  return result;
}

void ClassificationConfig::validate() const {
  if (optimizers.empty()) throw ConfigError("optimizers", "list at least one optimizer");
  if (losses.empty()) throw ConfigError("loss", "list at least one loss");
  if (folds < 2) throw ConfigError("dataset.folds", "must be >= 2");
  if (epochs < 1) throw ConfigError("dataset.epochs", "must be >= 1");
  if (!(settings.lambda > 0.0)) throw ConfigError("lambda", "must be positive");
  PfsoConfig pf = settings.pfso;
  pf.lambda = settings.lambda;
  pf.validate();
}

std::vector<std::vector<std::size_t>> make_folds(std::size_t K, std::size_t folds, RngStream& rng) {
  if (folds < 1 || K < folds)
    throw DataError(fmt::format("cannot split {} rows into {} folds", K, folds));
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out(folds);
  const std::size_t base = K / folds;
  const std::size_t extra = K % folds;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t n = base + (f < extra ? 1 : 0);
    out[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                  order.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
  }
  return out;
}

LossComponent classification_loss(LossKind kind, Eigen::Index d) {
  return kind == LossKind::logistic ? LossComponent::logistic(d)
                                    : LossComponent::least_squares(ResidualModel::sigmoid(d));
}

ClassificationRow ten_fold_cv(const Dataset& ds, OptimizerKind optimizer, LossKind loss_kind,
                              const ClassificationConfig& cfg) {
  ClassificationConfig checked = cfg;
  checked.optimizers = {optimizer};
  checked.losses = {loss_kind};
  checked.validate();
  ds.validate();
  if (!ds.classification) throw ConfigError("dataset", "cross-validation needs a classification dataset");
  const RngStream base(cfg.seed);
  RngStream shuffle_rng = base.substream(kIndex, 0);
  const auto folds = make_folds(ds.size(), cfg.folds, shuffle_rng);
  const Eigen::Index d = ds.feature_dim() + 1;
  const LossComponent loss = classification_loss(loss_kind, d);

  ClassificationRow row{optimizer, loss_kind, std::vector<FoldResult>(folds.size()), 0.0};
  detail::parallel_tasks(folds.size(), cfg.workers, [&](std::size_t f) {
    FoldResult& out = row.folds[f];
    out.fold = f;
    std::vector<std::size_t> train;
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
    std::sort(train.begin(), train.end());
    out.train_size = train.size();
    out.test_size = folds[f].size();

    std::optional<Standardizer> z;
    if (cfg.standardize) z = Standardizer::fit(ds, train);
    auto prepared = [&](std::size_t r) { return z ? z->apply(ds.data[r]) : ds.data[r]; };
    Dataset test{ds.name, {}, true};
    for (std::size_t r : folds[f]) test.data.push_back(prepared(r));
    std::vector<Datum> train_data;
    train_data.reserve(train.size());
    for (std::size_t r : train) train_data.push_back(prepared(r));

    const RngStream fold_rng = base.substream(kData, f);
    RngStream index_rng = fold_rng.substream(kIndex, 0);
    const auto indices = draw_indices(cfg.epochs * train_data.size(), train_data.size(), index_rng);

    try {
      auto opt = make_optimizer(optimizer, loss, ParameterVector::Zero(d), Matrix::Identity(d, d), cfg.settings,
                                fold_rng.substream(kOptimizer, static_cast<std::uint64_t>(optimizer)));
      for (std::size_t j : indices) opt->step(train_data[j]);
      out.flagged = opt->flagged();
      if (!opt->estimate().allFinite()) throw NumericError("training ended with a non-finite estimate");
      out.error_rate = error_rate(opt->estimate(), test);
    } catch (const ConfigError&) {
      throw;
    } catch (const NumericError& e) {
      out.diverged = true;
      out.error = e.what();
      out.error_rate = error_rate(ParameterVector::Constant(d, kNaN), test);
    } catch (const Error& e) {
      if (!cfg.tolerant) throw;
      out.skipped = true;
      out.error = e.what();
    }
  });

  double total = 0.0;
  std::size_t scored = 0;
  for (const auto& f : row.folds)
    if (!f.skipped) {
      total += f.error_rate;
      ++scored;
    }
  row.mean_error = scored ? total / static_cast<double>(scored) : kNaN;
  return row;
}

std::vector<ClassificationRow> run_classification(const Dataset& ds, const ClassificationConfig& cfg) {
  std::vector<ClassificationRow> rows;
  for (OptimizerKind kind : cfg.optimizers) {
    // Adaline trains its own linear rule whatever the loss; the Kalman family
    // only has a least-squares form.
    if (kind == OptimizerKind::adaline) {
      rows.push_back(ten_fold_cv(ds, kind, LossKind::lq, cfg));
      continue;
    }
    const bool kalman = kind == OptimizerKind::kf_ipm || kind == OptimizerKind::ekf_ipm ||
                        kind == OptimizerKind::ukf_ipm;
    for (LossKind loss : cfg.losses)
      if (!kalman || loss == LossKind::lq) rows.push_back(ten_fold_cv(ds, kind, loss, cfg));
  }
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) return kNaN;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

namespace {

std::vector<OptimizerKind> particle_optimizers(const std::vector<OptimizerKind>& kinds) {
  std::vector<OptimizerKind> out;
  for (OptimizerKind k : kinds)
    if (is_particle_filter(k)) out.push_back(k);
  if (out.empty()) throw ConfigError("optimizers", "a particle sweep needs ks-pfso or rp-pfso");
  return out;
}

void check_sweep_list(const std::vector<std::size_t>& particles) {
  if (particles.empty()) throw ConfigError("sweep.particles", "list at least one particle count");
  for (std::size_t n : particles)
    if (n < 1) throw ConfigError("sweep.particles", "particle counts must be >= 1");
}

}  // namespace

std::vector<SweepRow> sweep_particles(const ExperimentConfig& cfg, const std::vector<std::size_t>& particles) {
  check_sweep_list(particles);
  ExperimentConfig run = cfg;
  run.optimizers = particle_optimizers(cfg.optimizers);
  std::vector<SweepRow> rows;
  for (std::size_t n : particles) {
    run.settings.pfso.particles = n;
    const ExperimentResult result = run_experiment(run);
    for (OptimizerKind kind : run.optimizers) {
      SweepRow row{kind, n, {}, 0.0, 0.0, std::nullopt};
      for (const RunTrace* t : result.runs_for(kind))
        if (!t->failed) row.min_costs.push_back(t->min_cost());
      row.median_min_cost = median(row.min_costs);
      row.mean_min_cost = row.min_costs.empty()
                              ? kNaN
                              : std::accumulate(row.min_costs.begin(), row.min_costs.end(), 0.0) /
                                    static_cast<double>(row.min_costs.size());
      rows.push_back(std::move(row));
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return static_cast<int>(a.optimizer) < static_cast<int>(b.optimizer);
  });
  return rows;
}

std::vector<SweepRow> sweep_particles(const Dataset& ds, const ClassificationConfig& cfg, LossKind loss,
                                      const std::vector<std::size_t>& particles) {
  check_sweep_list(particles);
  ClassificationConfig run = cfg;
  run.optimizers = particle_optimizers(cfg.optimizers);
  std::vector<SweepRow> rows;
  for (OptimizerKind kind : run.optimizers)
    for (std::size_t n : particles) {
      run.settings.pfso.particles = n;
      const ClassificationRow r = ten_fold_cv(ds, kind, loss, run);
      rows.push_back(SweepRow{kind, n, {}, kNaN, kNaN, r.mean_error});
    }
  return rows;
}

}  // namespace filtopt
