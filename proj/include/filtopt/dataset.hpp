#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "filtopt/loss.hpp"

namespace filtopt {

struct Dataset {
  std::string name;
  std::vector<Datum> data;
  /// Targets are labels in {-1, +1}.
  bool classification = false;

  std::size_t size() const { return data.size(); }
  Eigen::Index feature_dim() const { return data.empty() ? 0 : data.front().x.size(); }
  /// Non-empty, finite, consistent feature dimension, labels in {-1, +1}.
  void validate() const;
};

/// x ~ N(0, I_{d-1}), y = sigmoid_h(theta_true, x) + sqrt(lambda) n.
Dataset gen_sigmoid_data(const ParameterVector& theta_true, std::size_t K, double lambda, RngStream& rng);

/// x ~ N(0, I_4) redrawn while |x1| < min_abs_x1, y = park_h(theta_true, x) + sqrt(lambda) n.
/// Throws ConfigError if theta_true lies in the model's singular set or
/// min_abs_x1 is below the model's own guard.
Dataset gen_park_data(const ParameterVector& theta_true, std::size_t K, double lambda, RngStream& rng,
                      double min_abs_x1 = kParkMinAbsX1);

struct CsvSchema {
  char delimiter = ',';
  bool header = false;
  /// Negative values count from the last column.
  int label_column = -1;
  /// Raw label token -> target. Empty means the label column is numeric and used as is.
  std::map<std::string, double> label_map;
  std::vector<int> ignore_columns;
  std::optional<std::size_t> expected_rows;
  std::optional<std::size_t> expected_attributes;
};

/// Reads delimited text. Blank lines and lines starting with '#' are skipped;
/// fields are whitespace-trimmed. Throws DataError carrying the 1-based line
/// of the first bad row.
Dataset load_csv_dataset(const std::filesystem::path& path, const CsvSchema& schema,
                         bool classification = true, std::string name = {});

/// n rows drawn without replacement, in their original order. Returns the
/// input unchanged when n >= size.
Dataset subsample(const Dataset& ds, std::size_t n, RngStream& rng);

/// Per-feature affine map fitted on a subset of rows.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Dataset& ds, const std::vector<std::size_t>& rows);
  Datum apply(const Datum& d) const;
};

}  // namespace filtopt
