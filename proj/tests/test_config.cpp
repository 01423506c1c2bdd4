#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "filtopt/config.hpp"
#include "filtopt/report.hpp"

using namespace filtopt;
namespace fs = std::filesystem;

namespace {

std::string field_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<none>";
}

const char* kSynthetic = R"({
  "name": "sig", "seed": 9, "repetitions": 3,
  "optimizers": ["ipm", "ks-pfso"],
  "pfso": {"particles": 40, "rho": 0.95},
  "synthetic": {"model": "sigmoid", "samples": 200, "theta_true_range": [-0.25, 0.25], "init_width": 6}
})";

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("parse_config: synthetic documents") {
  const auto cfg = parse_config(kSynthetic);
  CHECK(cfg.kind == RunConfig::Kind::synthetic);
  CHECK(cfg.seed() == 9);
  CHECK(cfg.name() == "sig");
  CHECK(cfg.experiment.repetitions == 3);
  CHECK(cfg.experiment.iterations == 200);
  CHECK(cfg.experiment.settings.pfso.particles == 40);
  CHECK(cfg.experiment.settings.pfso.rho == 0.95);
  CHECK(cfg.experiment.synthetic.init_width == 6.0);
  CHECK(cfg.experiment.synthetic.theta_true_low == -0.25);
  CHECK(cfg.experiment.optimizers == std::vector<OptimizerKind>{OptimizerKind::ipm, OptimizerKind::ks_pfso});

  auto copy = cfg;
  copy.set_seed(10);
  CHECK(copy.seed() == 10);
  CHECK(copy.experiment.seed == 10);
}

TEST_CASE("parse_config: errors name the field") {
  CHECK(field_of(R"({"optimizers": ["sgd"], "synthetic": {}})") == "optimizers");
  CHECK(field_of(R"({"optimizers": ["ipm"], "synthetic": {"modle": "park"}})") == "synthetic.modle");
  CHECK(field_of(R"({"optimizers": ["ipm"], "synthetic": {}, "colour": 1})") == "colour");
  CHECK(field_of(R"({"optimizers": ["ipm"]})") == "synthetic");
  CHECK(field_of(R"({"optimizers": ["ipm"], "synthetic": {}, "dataset": {"path": "x"}})") == "dataset");
  CHECK(field_of(R"({"optimizers": ["ipm"], "synthetic": {}, "lambda": -1})") == "lambda");
  CHECK(field_of(R"({"optimizers": ["ipm"], "synthetic": {}, "pfso": {"rho": 2}})") == "pfso.rho");
  CHECK(field_of(R"({"optimizers": ["ks-pfso"], "synthetic": {}, "sweep": {"particles": []}})") == "sweep.particles");
  CHECK(field_of(R"({"optimizers": ["ipm"], "synthetic": {"samples": 100}, "checkpoints": [500]})") == "checkpoints");
  CHECK(field_of(R"({"optimizers": ["ipm"], "synthetic": {}, "loss": "logistic"})") == "loss");
  CHECK(field_of("{not json") == "<document>");
}

TEST_CASE("parse_config: classification documents") {
  const auto cfg = parse_config(R"({
    "optimizers": ["ks-pfso", "adaline"], "loss": ["logistic", "lq"],
    "dataset": {"path": "iris.data", "label_column": 4,
                "label_map": {"Iris-setosa": -1, "Iris-versicolor": -1, "Iris-virginica": 1},
                "expected_rows": 150, "folds": 5, "subsample": null}
  })",
                                "/data/dir");
  CHECK(cfg.kind == RunConfig::Kind::classification);
  CHECK(cfg.classification.settings.lambda == 0.25);
  CHECK(cfg.classification.settings.pfso.particles == 4000);
  CHECK(cfg.classification.folds == 5);
  CHECK(cfg.classification.losses.size() == 2);
  CHECK(cfg.dataset.path == fs::path("/data/dir/iris.data"));
  CHECK(!cfg.dataset.subsample.has_value());
  CHECK(cfg.dataset.schema.label_map.at("Iris-virginica") == 1.0);

  CHECK(field_of(R"({"optimizers": ["ipm"], "dataset": {"path": "a", "label_map": {"x": 0}}})") == "dataset.label_map");
  CHECK(field_of(R"({"optimizers": ["ipm"], "dataset": {"path": "a"}, "repetitions": 2})") == "repetitions");
}

TEST_CASE("load_config reports unreadable files") {
  CHECK_THROWS_AS(load_config("/nonexistent/filtopt.json"), ConfigError);
}

TEST_CASE("fnv1a_hex") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("experiment report files") {
  auto cfg = parse_config(kSynthetic).experiment;
  cfg.repetitions = 1;
  cfg.iterations = 50;
  cfg.synthetic.samples = 50;
  const auto result = run_experiment(cfg);
  const fs::path dir = fs::temp_directory_path() / "filtopt_report_test";
  fs::remove_all(dir);
  Manifest m{"run-synthetic", "sig.json", fnv1a_hex("x"), cfg.seed, 1};
  const auto written = write_experiment_report(dir, result, m);
  for (const char* f : {"trace_ipm.tsv", "trace_ks-pfso.tsv", "comparison.tsv", "vsum.tsv", "summary.json", "manifest.json"})
    CHECK(fs::exists(dir / f));
  CHECK(written.size() >= 6);

  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["seed"] == 9);
  CHECK(manifest["config_hash"] == fnv1a_hex("x"));
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  REQUIRE(summary["optimizers"].size() == 2);
  CHECK(summary["optimizers"][1]["optimizer"] == "ks-pfso");
  CHECK(summary["optimizers"][1]["runs"] == 1);
  CHECK(slurp(dir / "comparison.tsv").find("k=50") != std::string::npos);
  CHECK(format_comparison_table(result).find("ks-pfso") != std::string::npos);

  for (const auto& entry : fs::directory_iterator(dir)) CHECK(entry.path().extension() != ".tmp");
}
