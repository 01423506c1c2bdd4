#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "filtopt/experiment.hpp"

namespace filtopt {

/// Everything needed to replay a run.
struct Manifest {
  std::string command;
  std::string config_path;
  std::string config_hash;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string version = FILTOPT_VERSION;
};

/// 64-bit FNV-1a, lowercase hex.
std::string fnv1a_hex(std::string_view bytes);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

void write_manifest(const std::filesystem::path& dir, const Manifest& m);

/// trace_<optimizer>.tsv for every optimizer, comparison.tsv (mean NC, one
/// row per optimizer, one column per checkpoint), vsum.tsv and summary.json.
/// Returns the paths written.
std::vector<std::filesystem::path> write_experiment_report(const std::filesystem::path& dir,
                                                           const ExperimentResult& result,
                                                           const Manifest& m);

/// classification.tsv (one row per optimizer and loss), folds.tsv, summary.json.
std::vector<std::filesystem::path> write_classification_report(const std::filesystem::path& dir,
                                                               const std::string& dataset,
                                                               const std::vector<ClassificationRow>& rows,
                                                               const Manifest& m);

/// sweep.tsv and summary.json.
std::vector<std::filesystem::path> write_sweep_report(const std::filesystem::path& dir,
                                                      const std::vector<SweepRow>& rows, const Manifest& m);

std::string format_classification_table(const std::string& dataset, const std::vector<ClassificationRow>& rows);
std::string format_comparison_table(const ExperimentResult& result);

}  // namespace filtopt
