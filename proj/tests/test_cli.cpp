#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "filtopt_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(FILTOPT_CLI_PATH) + " " + args + " > " + (kWork / "stdout.txt").string() +
                          " 2> " + (kWork / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const std::string& name, const std::string& body) {
  fs::create_directories(kWork);
  const fs::path p = kWork / name;
  std::ofstream(p) << body;
  return p;
}

const char* kSigmoid = R"({
  "seed": 3, "repetitions": 2, "checkpoints": [1, 10, 60],
  "optimizers": ["ipm", "ekf-ipm", "ukf-ipm", "ks-pfso", "rp-pfso"],
  "pfso": {"particles": 30},
  "synthetic": {"model": "sigmoid", "samples": 60}
})";

}  // namespace

TEST_CASE("run-synthetic writes one trace per optimizer plus a comparison table") {
  const auto cfg = write_config("sig.json", kSigmoid);
  const fs::path out = kWork / "sig_out";
  fs::remove_all(out);
  REQUIRE(run("run-synthetic --config " + cfg.string() + " --out " + out.string()) == 0);
  for (const char* opt : {"ipm", "ekf-ipm", "ukf-ipm", "ks-pfso", "rp-pfso"})
    CHECK(fs::exists(out / (std::string("trace_") + opt + ".tsv")));
  CHECK(fs::exists(out / "comparison.tsv"));
  CHECK(fs::exists(out / "manifest.json"));
  const std::string first = slurp(out / "trace_ks-pfso.tsv");

  fs::remove_all(out);
  REQUIRE(run("run-synthetic --config " + cfg.string() + " --out " + out.string()) == 0);
  CHECK(slurp(out / "trace_ks-pfso.tsv") == first);

  REQUIRE(run("run-synthetic --config " + cfg.string() + " --out " + out.string() + " --seed 4") == 0);
  CHECK(slurp(out / "trace_ks-pfso.tsv") != first);
  CHECK(slurp(out / "manifest.json").find("\"seed\": 4") != std::string::npos);
}

TEST_CASE("validation failures exit with code 2 and name the field") {
  const auto bad = write_config("bad.json", R"({"optimizers": ["newton"], "synthetic": {}})");
  CHECK(run("run-synthetic --config " + bad.string() + " --out " + (kWork / "x").string()) == 2);
  CHECK(slurp(kWork / "stderr.txt").find("optimizers") != std::string::npos);

  CHECK(run("validate-config --config " + bad.string()) == 2);
  CHECK(run("run-classify --config " + (kWork / "missing.json").string()) == 2);

  const auto nodata = write_config(
      "nodata.json", R"({"optimizers": ["ks-pfso"], "dataset": {"path": "does-not-exist.csv"}})");
  CHECK(run("run-classify --config " + nodata.string() + " --out " + (kWork / "y").string()) == 2);

  const auto empty_sweep = write_config(
      "sweep.json", R"({"optimizers": ["ks-pfso"], "synthetic": {}, "sweep": {"particles": []}})");
  CHECK(run("sweep-particles --config " + empty_sweep.string()) == 2);
  CHECK(run("no-such-command") == 2);
}

TEST_CASE("run-classify on IRIS reports one row with fold detail") {
  const fs::path data = fs::path(FILTOPT_TEST_DATA_DIR) / "iris.data";
  const auto cfg = write_config("iris.json", R"({
    "optimizers": ["ks-pfso"], "loss": "logistic", "pfso": {"particles": 100},
    "dataset": {"path": ")" + data.string() + R"(", "label_column": 4,
                "label_map": {"Iris-setosa": -1, "Iris-versicolor": -1, "Iris-virginica": 1}}
  })");
  const fs::path out = kWork / "iris_out";
  fs::remove_all(out);
  REQUIRE(run("run-classify --config " + cfg.string() + " --out " + out.string()) == 0);
  const std::string table = slurp(out / "classification.tsv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 2);
  CHECK(fs::exists(out / "folds.tsv"));
}

TEST_CASE("sweep-particles and list-optimizers") {
  const auto cfg = write_config("sweep2.json", R"({
    "seed": 2, "repetitions": 1, "optimizers": ["ks-pfso", "rp-pfso"],
    "synthetic": {"model": "sigmoid", "samples": 40}, "sweep": {"particles": [15, 50]}
  })");
  const fs::path out = kWork / "sweep_out";
  fs::remove_all(out);
  REQUIRE(run("sweep-particles --config " + cfg.string() + " --out " + out.string()) == 0);
  const std::string table = slurp(out / "sweep.tsv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 5);

  REQUIRE(run("list-optimizers") == 0);
  CHECK(slurp(kWork / "stdout.txt").find("rp-pfso") != std::string::npos);
}

TEST_CASE("environment variables mirror the flags") {
  const auto cfg = write_config("env.json", kSigmoid);
  const fs::path out = kWork / "env_out";
  fs::remove_all(out);
  const std::string cmd = "FILTOPT_SEED=11 " + std::string(FILTOPT_CLI_PATH) + " run-synthetic --config " +
                          cfg.string() + " --out " + out.string() + " > /dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(slurp(out / "manifest.json").find("\"seed\": 11") != std::string::npos);
}
