// filtopt command-line front end.
//
//   filtopt run-synthetic   --config cfg.json --out results/sigmoid
//   filtopt run-classify    --config configs/iris.json --out results/iris
//   filtopt sweep-particles --config configs/sweep.json --out results/sweep
//   filtopt validate-config --config cfg.json
//   filtopt list-optimizers
//
// Every flag may also come from the environment: FILTOPT_CONFIG, FILTOPT_OUT,
// FILTOPT_SEED, FILTOPT_WORKERS, FILTOPT_SUBSAMPLE, FILTOPT_VERBOSE.
// Exit status: 0 success, 2 configuration or input error, 3 numeric failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "filtopt/config.hpp"
#include "filtopt/report.hpp"

namespace fs = std::filesystem;
using namespace filtopt;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string config;
  std::string out = "results";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::size_t> subsample;
  bool verbose = false;
};

void log(const Options& o, const std::string& msg) {
  if (o.verbose) std::cerr << msg << "\n";
}

RunConfig prepare(const Options& o, Manifest& m, const std::string& command) {
  RunConfig cfg = load_config(o.config);
  if (o.seed) cfg.set_seed(*o.seed);
  if (o.workers) cfg.set_workers(*o.workers);
  if (o.subsample) cfg.dataset.subsample = *o.subsample == 0 ? std::nullopt : std::optional<std::size_t>(*o.subsample);
  m.command = command;
  m.config_path = fs::absolute(o.config).string();
  m.config_hash = fnv1a_hex(cfg.canonical);
  m.seed = cfg.seed();
  m.workers = cfg.kind == RunConfig::Kind::synthetic ? cfg.experiment.workers : cfg.classification.workers;
  return cfg;
}

void print_written(const std::vector<fs::path>& files) {
  for (const auto& f : files) std::cout << f.string() << "\n";
}

int run_synthetic(const Options& o) {
  Manifest m;
  RunConfig cfg = prepare(o, m, "run-synthetic");
  if (cfg.kind != RunConfig::Kind::synthetic)
    throw ConfigError("synthetic", "run-synthetic needs a config with a 'synthetic' block");
  const auto& e = cfg.experiment;
  log(o, fmt::format("{}: {} repetitions x {} iterations, {} optimizers, seed {}", e.name, e.repetitions,
                     e.iterations, e.optimizers.size(), e.seed));
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentResult result = run_experiment(e);
  log(o, fmt::format("finished in {:.1f}s",
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));
  for (const auto& r : result.runs)
    if (r.failed) std::cerr << fmt::format("warning: {} run {} (seed {}) failed: {}\n", to_string(r.optimizer),
                                           r.repetition, r.seed, r.error);
  print_written(write_experiment_report(o.out, result, m));
  std::cout << format_comparison_table(result);
  return 0;
}

int run_classify(const Options& o) {
  Manifest m;
  RunConfig cfg = prepare(o, m, "run-classify");
  if (cfg.kind != RunConfig::Kind::classification)
    throw ConfigError("dataset", "run-classify needs a config with a 'dataset' block");
  const Dataset ds = load_dataset(cfg.dataset, cfg.seed());
  log(o, fmt::format("{}: {} rows, {} attributes", ds.name, ds.size(), ds.feature_dim()));
  const auto rows = run_classification(ds, cfg.classification);
  print_written(write_classification_report(o.out, ds.name, rows, m));
  std::cout << format_classification_table(ds.name, rows);
  return 0;
}

int sweep(const Options& o) {
  Manifest m;
  RunConfig cfg = prepare(o, m, "sweep-particles");
  if (cfg.sweep.empty()) throw ConfigError("sweep.particles", "missing or empty");
  std::vector<SweepRow> rows;
  if (cfg.kind == RunConfig::Kind::synthetic) {
    rows = sweep_particles(cfg.experiment, cfg.sweep);
  } else {
    const Dataset ds = load_dataset(cfg.dataset, cfg.seed());
    rows = sweep_particles(ds, cfg.classification, cfg.classification.losses.front(), cfg.sweep);
  }
  print_written(write_sweep_report(o.out, rows, m));
  for (const auto& r : rows)
    std::cout << fmt::format("{}\t{}\t{:.6g}\t{:.6g}\n", to_string(r.optimizer), r.particles, r.median_min_cost,
                             r.error_rate.value_or(NAN));
  return 0;
}

int validate(const Options& o) {
  Manifest m;
  RunConfig cfg = prepare(o, m, "validate-config");
  if (cfg.kind == RunConfig::Kind::classification && !fs::exists(cfg.dataset.path))
    throw DataError(fmt::format("dataset file '{}' does not exist", cfg.dataset.path.string()));
  std::cout << fmt::format("{}: ok ({}, hash {})\n", cfg.name(),
                           cfg.kind == RunConfig::Kind::synthetic ? "synthetic" : "classification", m.config_hash);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle-filter and proximal stochastic optimizers"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "Run configuration (JSON)")->envname("FILTOPT_CONFIG");
    if (needs_config) c->required();
    sub->add_option("--out", o.out, "Output directory")->envname("FILTOPT_OUT");
    sub->add_option("--seed", o.seed, "Override the master seed")->envname("FILTOPT_SEED");
    sub->add_option("--workers", o.workers, "Worker threads for repetitions and folds")
        ->envname("FILTOPT_WORKERS")
        ->check(CLI::PositiveNumber);
    sub->add_option("--subsample", o.subsample, "Rows kept from the dataset, 0 for all")->envname("FILTOPT_SUBSAMPLE");
    sub->add_flag("--verbose,-v", o.verbose, "Progress on stderr")->envname("FILTOPT_VERBOSE");
  };

  auto* syn = app.add_subcommand("run-synthetic", "Synthetic least-squares experiment");
  auto* cls = app.add_subcommand("run-classify", "Cross-validated classification error rates");
  auto* swp = app.add_subcommand("sweep-particles", "Minimum cost or error rate against particle count");
  auto* val = app.add_subcommand("validate-config", "Parse and check a configuration");
  auto* lst = app.add_subcommand("list-optimizers", "Print the available optimizer names");
  for (auto* s : {syn, cls, swp, val}) add_common(s, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*lst) {
      for (OptimizerKind k : all_optimizer_kinds()) std::cout << to_string(k) << "\n";
      return 0;
    }
    if (*syn) return run_synthetic(o);
    if (*cls) return run_classify(o);
    if (*swp) return sweep(o);
    if (*val) return validate(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const StructuralError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DomainError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
