#include "filtopt/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <system_error>

#include <fmt/format.h>
#include <json.hpp>

namespace filtopt {

using nlohmann::json;

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.6g}", v);
}

json json_num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

struct Stats {
  double mean = NAN, sd = NAN, min = NAN, max = NAN;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  return s;
}

json stats_json(const Stats& s) {
  return {{"mean", json_num(s.mean)}, {"sd", json_num(s.sd)}, {"min", json_num(s.min)}, {"max", json_num(s.max)}};
}

json manifest_json(const Manifest& m) {
  return {{"command", m.command}, {"config", m.config_path}, {"config_hash", m.config_hash},
          {"seed", m.seed}, {"workers", m.workers}, {"version", m.version}};
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return fmt::format("{:016x}", h);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", tmp.string()));
    out << content;
    out.flush();
    if (!out) throw Error(fmt::format("short write to '{}'", tmp.string()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(fmt::format("cannot move '{}' into place: {}", path.string(), ec.message()));
  }
}

void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  write_file_atomic(dir / "manifest.json", manifest_json(m).dump(2) + "\n");
}

std::string format_comparison_table(const ExperimentResult& result) {
  std::string out = "optimizer";
  if (result.aggregates.empty()) return out + "\n";
  std::vector<std::size_t> ks;
  for (const auto& a : result.aggregates)
    if (a.k.size() > ks.size()) ks = a.k;
  for (std::size_t k : ks)
    if (k > 0) out += fmt::format("\tk={}", k);
  out += "\n";
  for (const auto& a : result.aggregates) {
    out += to_string(a.optimizer);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (ks[i] == 0) continue;
      out += "\t" + (i < a.mean_nc.size() ? num(a.mean_nc[i]) : std::string("nan"));
    }
    out += "\n";
  }
  return out;
}

std::vector<std::filesystem::path> write_experiment_report(const std::filesystem::path& dir,
                                                           const ExperimentResult& result,
                                                           const Manifest& m) {
  std::vector<std::filesystem::path> written;
  json summary = {{"manifest", manifest_json(m)}, {"optimizers", json::array()}};

  for (const auto& agg : result.aggregates) {
    std::string tsv = "run\tseed\tk\tcost\tnc\tvsum\n";
    std::vector<double> finals;
    json failures = json::array();
    for (const RunTrace* t : result.runs_for(agg.optimizer)) {
      if (t->failed) {
        failures.push_back({{"run", t->repetition}, {"seed", t->seed}, {"error", t->error}});
        continue;
      }
      for (std::size_t i = 0; i < t->k.size(); ++i)
        tsv += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", t->repetition, t->seed, t->k[i], num(t->cost[i]),
                           num(t->nc[i]), num(t->vsum[i]));
      finals.push_back(t->nc.back());
    }
    for (std::size_t i = 0; i < agg.k.size(); ++i)
      tsv += fmt::format("mean\t\t{}\t\t{}\t{}\n", agg.k[i], num(agg.mean_nc[i]), num(agg.mean_vsum[i]));
    const auto path = dir / fmt::format("trace_{}.tsv", to_string(agg.optimizer));
    write_file_atomic(path, tsv);
    written.push_back(path);

    json entry = {{"optimizer", to_string(agg.optimizer)}, {"runs", agg.runs}, {"failures", failures},
                  {"final_nc", stats_json(stats(finals))}, {"checkpoints", agg.k}};
    json mean_nc = json::array(), mean_vsum = json::array();
    for (std::size_t i = 0; i < agg.k.size(); ++i) {
      mean_nc.push_back(json_num(agg.mean_nc[i]));
      mean_vsum.push_back(json_num(agg.mean_vsum[i]));
    }
    entry["mean_nc"] = mean_nc;
    entry["mean_vsum"] = mean_vsum;
    summary["optimizers"].push_back(entry);
  }

  write_file_atomic(dir / "comparison.tsv", format_comparison_table(result));
  written.push_back(dir / "comparison.tsv");

  std::string vs = "optimizer\tk\tmean_vsum\n";
  for (const auto& agg : result.aggregates)
    for (std::size_t i = 0; i < agg.k.size(); ++i)
      if (!std::isnan(agg.mean_vsum[i]) && agg.k[i] > 0)
        vs += fmt::format("{}\t{}\t{}\n", to_string(agg.optimizer), agg.k[i], num(agg.mean_vsum[i]));
  write_file_atomic(dir / "vsum.tsv", vs);
  written.push_back(dir / "vsum.tsv");

  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  written.push_back(dir / "summary.json");
  write_manifest(dir, m);
  written.push_back(dir / "manifest.json");
  return written;
}

std::string format_classification_table(const std::string& dataset, const std::vector<ClassificationRow>& rows) {
  std::size_t folds = 0;
  for (const auto& r : rows) folds = std::max(folds, r.folds.size());
  std::string out = fmt::format("optimizer\tloss\t{}", dataset);
  for (std::size_t f = 0; f < folds; ++f) out += fmt::format("\tfold{}", f + 1);
  out += "\n";
  for (const auto& r : rows) {
    out += fmt::format("{}\t{}\t{:.4f}", to_string(r.optimizer), to_string(r.loss), r.mean_error);
    for (const auto& f : r.folds) out += "\t" + (f.skipped ? std::string("skipped") : fmt::format("{:.4f}", f.error_rate));
    out += "\n";
  }
  return out;
}

std::vector<std::filesystem::path> write_classification_report(const std::filesystem::path& dir,
                                                               const std::string& dataset,
                                                               const std::vector<ClassificationRow>& rows,
                                                               const Manifest& m) {
  write_file_atomic(dir / "classification.tsv", format_classification_table(dataset, rows));

  std::string folds = "optimizer\tloss\tfold\ttrain\ttest\terror_rate\tflagged\tdiverged\tskipped\terror\n";
  json summary = {{"manifest", manifest_json(m)}, {"dataset", dataset}, {"rows", json::array()}};
  for (const auto& r : rows) {
    json per_fold = json::array();
    std::vector<double> rates;
    for (const auto& f : r.folds) {
      folds += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n", to_string(r.optimizer), to_string(r.loss),
                           f.fold + 1, f.train_size, f.test_size, f.skipped ? "nan" : num(f.error_rate), f.flagged,
                           f.diverged ? 1 : 0, f.skipped ? 1 : 0, f.error);
      per_fold.push_back(f.skipped ? json(nullptr) : json(f.error_rate));
      if (!f.skipped) rates.push_back(f.error_rate);
    }
    summary["rows"].push_back({{"optimizer", to_string(r.optimizer)},
                               {"loss", to_string(r.loss)},
                               {"mean_error", json_num(r.mean_error)},
                               {"fold_error", per_fold},
                               {"error_stats", stats_json(stats(rates))}});
  }
  write_file_atomic(dir / "folds.tsv", folds);
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  write_manifest(dir, m);
  return {dir / "classification.tsv", dir / "folds.tsv", dir / "summary.json", dir / "manifest.json"};
}

std::vector<std::filesystem::path> write_sweep_report(const std::filesystem::path& dir,
                                                      const std::vector<SweepRow>& rows, const Manifest& m) {
  std::string tsv = "optimizer\tparticles\tmedian_min_cost\tmean_min_cost\terror_rate\n";
  json summary = {{"manifest", manifest_json(m)}, {"rows", json::array()}};
  for (const auto& r : rows) {
    const double err = r.error_rate.value_or(NAN);
    tsv += fmt::format("{}\t{}\t{}\t{}\t{}\n", to_string(r.optimizer), r.particles, num(r.median_min_cost),
                       num(r.mean_min_cost), num(err));
    summary["rows"].push_back({{"optimizer", to_string(r.optimizer)},
                               {"particles", r.particles},
                               {"median_min_cost", json_num(r.median_min_cost)},
                               {"mean_min_cost", json_num(r.mean_min_cost)},
                               {"error_rate", json_num(err)},
                               {"min_costs", r.min_costs}});
  }
  write_file_atomic(dir / "sweep.tsv", tsv);
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  write_manifest(dir, m);
  return {dir / "sweep.tsv", dir / "summary.json", dir / "manifest.json"};
}

}  // namespace filtopt
