#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "filtopt/experiment.hpp"

namespace filtopt {

struct DatasetSpec {
  std::filesystem::path path;
  std::string name;
  CsvSchema schema;
  /// Rows kept after loading; nullopt keeps the full file.
  std::optional<std::size_t> subsample = 5000;
};

/// A parsed run document. Exactly one of `synthetic` / `dataset` is present
/// in the source, which fixes `kind`.
struct RunConfig {
  enum class Kind { synthetic, classification };

  Kind kind = Kind::synthetic;
  /// Canonical serialization, hashed into the run manifest.
  std::string canonical;
  ExperimentConfig experiment;
  ClassificationConfig classification;
  DatasetSpec dataset;
  std::vector<std::size_t> sweep;

  std::uint64_t seed() const;
  const std::string& name() const;
  void set_seed(std::uint64_t seed);
  void set_workers(unsigned workers);
};

/// Relative dataset paths resolve against base_dir. Throws ConfigError naming
/// the offending key for missing, mistyped, unknown or out-of-range fields.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Loads and subsamples (with a seed derived from `seed`) the configured file.
Dataset load_dataset(const DatasetSpec& spec, std::uint64_t seed);

}  // namespace filtopt
