#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "filtopt/dataset.hpp"
#include "filtopt/optimizer.hpp"

namespace filtopt {

enum class SyntheticModel { sigmoid, park };

const char* to_string(SyntheticModel model);

/// How each repetition draws its ground truth, data and starting point.
struct SyntheticSpec {
  SyntheticModel model = SyntheticModel::sigmoid;
  std::size_t samples = 3000;
  /// Used for every repetition when set; otherwise drawn per repetition,
  /// uniform per coordinate on [theta_true_low, theta_true_high].
  std::optional<ParameterVector> theta_true;
  double theta_true_low = 1.0;
  double theta_true_high = 2.0;
  /// theta0 ~ U[theta_true - init_width, theta_true + init_width] per coordinate.
  double init_width = 1.0;
  /// V0 = prior_variance * I.
  double prior_variance = 1.0;
  /// Observation noise variance of the generated targets; defaults to lambda.
  std::optional<double> noise_variance;
  /// Park inputs are redrawn while |x1| falls below this.
  double min_abs_x1 = kParkMinAbsX1;

  Eigen::Index dim() const { return model == SyntheticModel::park ? 4 : 2; }
};

/// Table 1 column heads.
std::vector<std::size_t> default_checkpoints(std::size_t iterations);

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 1;
  std::size_t repetitions = 30;
  std::size_t iterations = 3000;
  std::vector<std::size_t> checkpoints;
  std::vector<OptimizerKind> optimizers;
  OptimizerSettings settings;
  SyntheticSpec synthetic;
  /// Repetitions run concurrently on this many threads.
  unsigned workers = 1;

  void validate() const;
};

/// One optimizer, one repetition. Entry 0 is the initial estimate (k = 0, NC = 1).
struct RunTrace {
  OptimizerKind optimizer{};
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> k;
  std::vector<double> cost;
  std::vector<double> nc;
  /// NaN for methods without a covariance.
  std::vector<double> vsum;
  double c0 = 0.0;
  std::size_t flagged = 0;
  bool failed = false;
  std::string error;
  ParameterVector final_theta;

  double min_cost() const;
};

struct AggregateTrace {
  OptimizerKind optimizer{};
  std::vector<std::size_t> k;
  std::vector<double> mean_nc;
  std::vector<double> mean_vsum;
  std::size_t runs = 0;
  std::size_t failures = 0;
};

struct ExperimentResult {
  std::vector<RunTrace> runs;
  std::vector<AggregateTrace> aggregates;

  std::vector<const RunTrace*> runs_for(OptimizerKind kind) const;
  const AggregateTrace& aggregate(OptimizerKind kind) const;
};

/// Repetition r derives all its randomness from derive_seed(seed, r); data,
/// theta_true, theta0 and the index sequence j_k are shared by every optimizer
/// inside a repetition. A failing run is kept with its seed and error message
/// and left out of the averages.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Single repetition, exposed for replaying a failed run.
std::vector<RunTrace> run_repetition(const ExperimentConfig& cfg, std::size_t repetition);

struct ClassificationConfig {
  std::string name = "classification";
  std::uint64_t seed = 1;
  std::vector<OptimizerKind> optimizers;
  std::vector<LossKind> losses{LossKind::logistic};
  OptimizerSettings settings;
  std::size_t folds = 10;
  std::size_t epochs = 1;
  /// A fold whose run throws is skipped and recorded instead of failing the row.
  bool tolerant = false;
  /// z-scores with training-fold statistics.
  bool standardize = false;
  unsigned workers = 1;

  void validate() const;
};

/// Shuffle 0..K-1 once and cut into `folds` contiguous pieces whose sizes
/// differ by at most one.
std::vector<std::vector<std::size_t>> make_folds(std::size_t K, std::size_t folds, RngStream& rng);

struct FoldResult {
  std::size_t fold = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double error_rate = 0.0;
  std::size_t flagged = 0;
  /// Training produced a non-finite estimate; every test point is scored as
  /// -1, the threshold rule's verdict on a non-finite score.
  bool diverged = false;
  bool skipped = false;
  std::string error;
};

struct ClassificationRow {
  OptimizerKind optimizer{};
  LossKind loss{};
  std::vector<FoldResult> folds;
  /// Mean over folds that were not skipped; NaN if all were.
  double mean_error = 0.0;
};

/// theta0 = 0, V0 = I. Each fold trains for epochs * |train| iterations on
/// indices drawn uniformly with replacement from the training rows.
ClassificationRow ten_fold_cv(const Dataset& ds, OptimizerKind optimizer, LossKind loss,
                              const ClassificationConfig& cfg);

std::vector<ClassificationRow> run_classification(const Dataset& ds, const ClassificationConfig& cfg);

/// Loss for a model of parameter dimension d, as used in the classification runs.
LossComponent classification_loss(LossKind kind, Eigen::Index d);

struct SweepRow {
  OptimizerKind optimizer{};
  std::size_t particles = 0;
  /// Synthetic sweeps: per-repetition minimum of C(k) over the logged checkpoints.
  std::vector<double> min_costs;
  double median_min_cost = 0.0;
  double mean_min_cost = 0.0;
  /// Classification sweeps: mean CV error rate.
  std::optional<double> error_rate;
};

/// One row per (PFSO optimizer in cfg, N). Non-particle optimizers are ignored.
std::vector<SweepRow> sweep_particles(const ExperimentConfig& cfg, const std::vector<std::size_t>& particles);
std::vector<SweepRow> sweep_particles(const Dataset& ds, const ClassificationConfig& cfg, LossKind loss,
                                      const std::vector<std::size_t>& particles);

double median(std::vector<double> values);

}  // namespace filtopt
