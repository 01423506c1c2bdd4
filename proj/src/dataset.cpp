#include "filtopt/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace filtopt {

void Dataset::validate() const {
  if (data.empty()) throw DataError(fmt::format("dataset '{}' is empty", name));
  const Eigen::Index p = data.front().x.size();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Datum& d = data[i];
    if (d.x.size() != p)
      throw StructuralError(fmt::format("row {} has {} features, expected {}", i, d.x.size(), p));
    if (!d.x.allFinite() || !std::isfinite(d.y)) throw DataError(fmt::format("row {} is not finite", i));
    if (classification && d.y != 1.0 && d.y != -1.0)
      throw DataError(fmt::format("row {} has label {}, expected -1 or +1", i, d.y));
  }
}

Dataset gen_sigmoid_data(const ParameterVector& theta_true, std::size_t K, double lambda, RngStream& rng) {
  if (theta_true.size() < 1) throw ConfigError("synthetic.theta_true", "needs at least one entry");
  if (!(lambda >= 0.0)) throw ConfigError("lambda", "must be non-negative");
  const double sd = std::sqrt(lambda);
  Dataset ds{"sigmoid", {}, false};
  ds.data.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    Datum d{rng.normal_vector(theta_true.size() - 1), 0.0};
    d.y = sigmoid_h(theta_true, d.x) + sd * rng.normal();
    ds.data.push_back(std::move(d));
  }
  return ds;
}

Dataset gen_park_data(const ParameterVector& theta_true, std::size_t K, double lambda, RngStream& rng,
                      double min_abs_x1) {
  if (theta_true.size() != 4) throw ConfigError("synthetic.theta_true", "the park model has four parameters");
  if (!(min_abs_x1 >= kParkMinAbsX1) || !(min_abs_x1 < 5.0))
    throw ConfigError("synthetic.min_abs_x1", fmt::format("must lie in [{}, 5)", kParkMinAbsX1));
  if (!(lambda >= 0.0)) throw ConfigError("lambda", "must be non-negative");
  const Eigen::Vector4d probe(1.0, 0.0, 0.0, 0.0);
  try {
    park_h_gradient(theta_true, probe);
  } catch (const DomainError& e) {
    throw ConfigError("synthetic.theta_true", e.what());
  }
  const double sd = std::sqrt(lambda);
  Dataset ds{"park", {}, false};
  ds.data.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    Datum d{rng.normal_vector(4), 0.0};
    while (std::abs(d.x[0]) < min_abs_x1) d.x[0] = rng.normal();
    d.y = park_h(theta_true, d.x) + sd * rng.normal();
    ds.data.push_back(std::move(d));
  }
  return ds;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  if (delim == ' ' || delim == '\t') {
    std::istringstream in(line);
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
  }
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, delim)) out.push_back(trim(field));
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

Dataset load_csv_dataset(const std::filesystem::path& path, const CsvSchema& schema,
                         bool classification, std::string name) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  Dataset ds{name.empty() ? path.stem().string() : std::move(name), {}, classification};

  std::string line;
  std::size_t lineno = 0;
  std::optional<std::size_t> columns;
  bool header_pending = schema.header;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const auto fields = split(t, schema.delimiter);
    if (!columns) {
      columns = fields.size();
      if (*columns < 2) throw DataError("need at least one attribute and a label", lineno);
    } else if (fields.size() != *columns) {
      throw DataError(fmt::format("expected {} fields, found {}", *columns, fields.size()), lineno);
    }
    const auto n = static_cast<int>(*columns);
    const int label = schema.label_column < 0 ? n + schema.label_column : schema.label_column;
    if (label < 0 || label >= n) throw DataError(fmt::format("label column {} out of range", schema.label_column), lineno);
    std::set<int> skip;
    for (int c : schema.ignore_columns) skip.insert(c < 0 ? n + c : c);

    Datum d;
    std::vector<double> x;
    x.reserve(fields.size());
    for (int c = 0; c < n; ++c) {
      const std::string& f = fields[static_cast<std::size_t>(c)];
      if (c == label) {
        if (!schema.label_map.empty()) {
          auto it = schema.label_map.find(f);
          if (it == schema.label_map.end()) throw DataError(fmt::format("unknown label '{}'", f), lineno);
          d.y = it->second;
        } else if (!parse_double(f, d.y)) {
          throw DataError(fmt::format("unparseable label '{}'", f), lineno);
        }
        continue;
      }
      if (skip.count(c)) continue;
      double v = 0.0;
      if (!parse_double(f, v)) throw DataError(fmt::format("unparseable value '{}' in column {}", f, c), lineno);
      x.push_back(v);
    }
    if (classification && d.y != 1.0 && d.y != -1.0)
      throw DataError(fmt::format("label {} is not -1 or +1", d.y), lineno);
    d.x = Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    ds.data.push_back(std::move(d));
  }
  if (ds.data.empty()) throw DataError(fmt::format("'{}' contains no data rows", path.string()));
  if (schema.expected_rows && ds.size() != *schema.expected_rows)
    throw DataError(fmt::format("'{}' has {} rows, expected {}", path.string(), ds.size(), *schema.expected_rows));
  if (schema.expected_attributes &&
      static_cast<std::size_t>(ds.feature_dim()) != *schema.expected_attributes)
    throw DataError(fmt::format("'{}' has {} attributes, expected {}", path.string(), ds.feature_dim(),
                                *schema.expected_attributes));
  return ds;
}

Dataset subsample(const Dataset& ds, std::size_t n, RngStream& rng) {
  if (n >= ds.size()) return ds;
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  Dataset out{ds.name, {}, ds.classification};
  out.data.reserve(n);
  for (std::size_t i : idx) out.data.push_back(ds.data[i]);
  return out;
}

Standardizer Standardizer::fit(const Dataset& ds, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw StructuralError("cannot standardize on zero rows");
  const Eigen::Index p = ds.feature_dim();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(p);
  for (std::size_t r : rows) sum += ds.data[r].x;
  Standardizer s{sum / static_cast<double>(rows.size()), Eigen::VectorXd::Zero(p)};
  for (std::size_t r : rows) s.scale += (ds.data[r].x - s.mean).cwiseAbs2();
  s.scale = (s.scale / static_cast<double>(rows.size())).cwiseSqrt();
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(s.scale[j] > 0.0)) s.scale[j] = 1.0;
  return s;
}

Datum Standardizer::apply(const Datum& d) const {
  return Datum{(d.x - mean).cwiseQuotient(scale), d.y};
}

}  // namespace filtopt
