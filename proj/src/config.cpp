#include "filtopt/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace filtopt {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& prefix, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError(prefix + key, "unknown key");
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

template <typename T>
T get(const json& v, const std::string& field) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(field, fmt::format("unexpected value {}", v.dump()));
  }
}

std::size_t get_count(const json& v, const std::string& field) {
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(field, fmt::format("expected a non-negative integer, got {}", v.dump()));
  return v.get<std::size_t>();
}

double get_number(const json& v, const std::string& field) {
  if (!v.is_number()) throw ConfigError(field, fmt::format("expected a number, got {}", v.dump()));
  return v.get<double>();
}

ParameterVector get_vector(const json& v, const std::string& field) {
  if (!v.is_array() || v.empty()) throw ConfigError(field, "expected a non-empty array of numbers");
  ParameterVector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = get_number(v[i], field);
  return out;
}

std::vector<std::size_t> get_counts(const json& v, const std::string& field) {
  if (!v.is_array()) throw ConfigError(field, "expected an array of integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) out.push_back(get_count(e, field));
  return out;
}

std::vector<LossKind> get_losses(const json& v) {
  std::vector<LossKind> out;
  auto one = [&](const json& e) {
    try {
      out.push_back(loss_kind_from_string(get<std::string>(e, "loss")));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& err) {
      throw ConfigError("loss", err.what());
    }
  };
  if (v.is_array()) {
    for (const auto& e : v) one(e);
  } else {
    one(v);
  }
  if (out.empty()) throw ConfigError("loss", "list at least one loss");
  return out;
}

void parse_settings(const json& doc, OptimizerSettings& s) {
  if (const json* v = find(doc, "lambda")) s.lambda = get_number(*v, "lambda");
  if (const json* pf = find(doc, "pfso")) {
    if (!pf->is_object()) throw ConfigError("pfso", "expected an object");
    reject_unknown(*pf, "pfso.", {"particles", "rho", "perturbation_scale", "resampling", "workers"});
    if (const json* v = find(*pf, "particles")) s.pfso.particles = get_count(*v, "pfso.particles");
    if (const json* v = find(*pf, "rho")) s.pfso.rho = get_number(*v, "pfso.rho");
    if (const json* v = find(*pf, "perturbation_scale"))
      s.pfso.perturbation_scale = get_number(*v, "pfso.perturbation_scale");
    if (const json* v = find(*pf, "workers"))
      s.pfso.workers = static_cast<unsigned>(std::max<std::size_t>(1, get_count(*v, "pfso.workers")));
    if (const json* v = find(*pf, "resampling")) {
      const auto name = get<std::string>(*v, "pfso.resampling");
      if (name == "residual") s.pfso.resampling = ResamplingKind::residual;
      else if (name == "multinomial") s.pfso.resampling = ResamplingKind::multinomial;
      else throw ConfigError("pfso.resampling", fmt::format("unknown scheme '{}'", name));
    }
  }
  if (const json* ipm = find(doc, "ipm")) {
    if (!ipm->is_object()) throw ConfigError("ipm", "expected an object");
    reject_unknown(*ipm, "ipm.", {"max_iterations", "tolerance"});
    if (const json* v = find(*ipm, "max_iterations"))
      s.ipm_max_iterations = static_cast<int>(get_count(*v, "ipm.max_iterations"));
    if (const json* v = find(*ipm, "tolerance")) s.ipm_tolerance = get_number(*v, "ipm.tolerance");
  }
  if (const json* ukf = find(doc, "ukf")) {
    if (!ukf->is_object()) throw ConfigError("ukf", "expected an object");
    reject_unknown(*ukf, "ukf.", {"kappa"});
    if (const json* v = find(*ukf, "kappa")) s.ut.kappa = get_number(*v, "ukf.kappa");
  }
  if (s.ipm_max_iterations < 1) throw ConfigError("ipm.max_iterations", "must be >= 1");
  if (!(s.ipm_tolerance > 0.0)) throw ConfigError("ipm.tolerance", "must be positive");
}

std::vector<OptimizerKind> parse_optimizers(const json& doc) {
  const json* v = find(doc, "optimizers");
  if (!v) throw ConfigError("optimizers", "missing");
  if (!v->is_array() || v->empty()) throw ConfigError("optimizers", "expected a non-empty array of names");
  std::vector<OptimizerKind> out;
  for (const auto& e : *v) {
    const OptimizerKind k = optimizer_kind_from_string(get<std::string>(e, "optimizers"));
    if (std::find(out.begin(), out.end(), k) != out.end())
      throw ConfigError("optimizers", fmt::format("'{}' listed twice", to_string(k)));
    out.push_back(k);
  }
  return out;
}

void parse_synthetic(const json& syn, SyntheticSpec& spec) {
  if (!syn.is_object()) throw ConfigError("synthetic", "expected an object");
  reject_unknown(syn, "synthetic.",
                 {"model", "samples", "theta_true", "theta_true_range", "init_width", "prior_variance",
                  "noise_variance", "min_abs_x1"});
  if (const json* v = find(syn, "model")) {
    const auto name = get<std::string>(*v, "synthetic.model");
    if (name == "sigmoid") spec.model = SyntheticModel::sigmoid;
    else if (name == "park") spec.model = SyntheticModel::park;
    else throw ConfigError("synthetic.model", fmt::format("unknown model '{}'", name));
  }
  if (const json* v = find(syn, "samples")) spec.samples = get_count(*v, "synthetic.samples");
  if (const json* v = find(syn, "theta_true")) spec.theta_true = get_vector(*v, "synthetic.theta_true");
  if (const json* v = find(syn, "theta_true_range")) {
    const ParameterVector r = get_vector(*v, "synthetic.theta_true_range");
    if (r.size() != 2) throw ConfigError("synthetic.theta_true_range", "expected [low, high]");
    spec.theta_true_low = r[0];
    spec.theta_true_high = r[1];
  }
  if (const json* v = find(syn, "init_width")) spec.init_width = get_number(*v, "synthetic.init_width");
  if (const json* v = find(syn, "prior_variance")) spec.prior_variance = get_number(*v, "synthetic.prior_variance");
  if (const json* v = find(syn, "noise_variance")) spec.noise_variance = get_number(*v, "synthetic.noise_variance");
  if (const json* v = find(syn, "min_abs_x1")) spec.min_abs_x1 = get_number(*v, "synthetic.min_abs_x1");
}

void parse_dataset(const json& dsj, const std::filesystem::path& base_dir, DatasetSpec& spec,
                   ClassificationConfig& cc) {
  if (!dsj.is_object()) throw ConfigError("dataset", "expected an object");
  reject_unknown(dsj, "dataset.",
                 {"path", "name", "delimiter", "header", "label_column", "label_map", "ignore_columns",
                  "expected_rows", "expected_attributes", "subsample", "standardize", "folds", "epochs",
                  "tolerant"});
  const json* p = find(dsj, "path");
  if (!p) throw ConfigError("dataset.path", "missing");
  spec.path = get<std::string>(*p, "dataset.path");
  if (spec.path.is_relative() && !base_dir.empty()) spec.path = base_dir / spec.path;
  spec.name = spec.path.stem().string();
  if (const json* v = find(dsj, "name")) spec.name = get<std::string>(*v, "dataset.name");
  if (const json* v = find(dsj, "delimiter")) {
    const auto d = get<std::string>(*v, "dataset.delimiter");
    if (d == "\\t" || d == "tab") spec.schema.delimiter = '\t';
    else if (d.size() == 1) spec.schema.delimiter = d[0];
    else throw ConfigError("dataset.delimiter", "expected a single character");
  }
  if (const json* v = find(dsj, "header")) spec.schema.header = get<bool>(*v, "dataset.header");
  if (const json* v = find(dsj, "label_column")) spec.schema.label_column = get<int>(*v, "dataset.label_column");
  if (const json* v = find(dsj, "label_map")) {
    if (!v->is_object() || v->empty()) throw ConfigError("dataset.label_map", "expected a non-empty object");
    for (const auto& [raw, target] : v->items()) {
      const double t = get_number(target, "dataset.label_map");
      if (t != 1.0 && t != -1.0) throw ConfigError("dataset.label_map", fmt::format("'{}' must map to -1 or +1", raw));
      spec.schema.label_map[raw] = t;
    }
  }
  if (const json* v = find(dsj, "ignore_columns")) {
    if (!v->is_array()) throw ConfigError("dataset.ignore_columns", "expected an array");
    for (const auto& e : *v) spec.schema.ignore_columns.push_back(get<int>(e, "dataset.ignore_columns"));
  }
  if (const json* v = find(dsj, "expected_rows")) spec.schema.expected_rows = get_count(*v, "dataset.expected_rows");
  if (const json* v = find(dsj, "expected_attributes"))
    spec.schema.expected_attributes = get_count(*v, "dataset.expected_attributes");
  if (const json* v = find(dsj, "subsample")) {
    if (v->is_null()) spec.subsample.reset();
    else {
      const std::size_t n = get_count(*v, "dataset.subsample");
      spec.subsample = n == 0 ? std::nullopt : std::optional<std::size_t>(n);
    }
  }
  if (const json* v = find(dsj, "standardize")) cc.standardize = get<bool>(*v, "dataset.standardize");
  if (const json* v = find(dsj, "folds")) cc.folds = get_count(*v, "dataset.folds");
  if (const json* v = find(dsj, "epochs")) cc.epochs = get_count(*v, "dataset.epochs");
  if (const json* v = find(dsj, "tolerant")) cc.tolerant = get<bool>(*v, "dataset.tolerant");
}

}  // namespace

std::uint64_t RunConfig::seed() const {
  return kind == Kind::synthetic ? experiment.seed : classification.seed;
}

const std::string& RunConfig::name() const {
  return kind == Kind::synthetic ? experiment.name : classification.name;
}

void RunConfig::set_seed(std::uint64_t seed) {
  experiment.seed = seed;
  classification.seed = seed;
}

void RunConfig::set_workers(unsigned workers) {
  experiment.workers = std::max(1u, workers);
  classification.workers = std::max(1u, workers);
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<document>", e.what());
  }
  if (!doc.is_object()) throw ConfigError("<document>", "expected a JSON object");
  reject_unknown(doc, "", {"name", "seed", "repetitions", "iterations", "checkpoints", "lambda", "loss",
                           "optimizers", "workers", "pfso", "ipm", "ukf", "synthetic", "dataset", "sweep"});

  RunConfig cfg;
  cfg.canonical = doc.dump();
  const bool synthetic = doc.contains("synthetic");
  const bool classification = doc.contains("dataset");
  if (synthetic == classification)
    throw ConfigError(synthetic ? "dataset" : "synthetic", "give exactly one of 'synthetic' or 'dataset'");
  cfg.kind = synthetic ? RunConfig::Kind::synthetic : RunConfig::Kind::classification;

  OptimizerSettings settings;
  if (classification) {
    settings.lambda = 0.25;
    settings.pfso.particles = 4000;
  }
  parse_settings(doc, settings);
  const auto optimizers = parse_optimizers(doc);

  std::string name = "run";
  if (const json* v = find(doc, "name")) name = get<std::string>(*v, "name");
  std::uint64_t seed = 1;
  if (const json* v = find(doc, "seed")) {
    if (!v->is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
    seed = v->get<std::uint64_t>();
  }
  unsigned workers = 1;
  if (const json* v = find(doc, "workers")) workers = static_cast<unsigned>(std::max<std::size_t>(1, get_count(*v, "workers")));

  if (synthetic) {
    ExperimentConfig& e = cfg.experiment;
    e.name = name;
    e.seed = seed;
    e.optimizers = optimizers;
    e.settings = settings;
    e.workers = workers;
    parse_synthetic(doc["synthetic"], e.synthetic);
    if (const json* v = find(doc, "repetitions")) e.repetitions = get_count(*v, "repetitions");
    e.iterations = e.synthetic.samples;
    if (const json* v = find(doc, "iterations")) e.iterations = get_count(*v, "iterations");
    if (const json* v = find(doc, "checkpoints")) e.checkpoints = get_counts(*v, "checkpoints");
    if (const json* v = find(doc, "loss")) {
      const auto losses = get_losses(*v);
      if (losses.size() != 1 || losses.front() != LossKind::lq)
        throw ConfigError("loss", "synthetic experiments use the least-squares loss");
    }
    for (const char* key : {"dataset"})
      if (doc.contains(key)) throw ConfigError(key, "not valid for synthetic runs");
    e.validate();
  } else {
    ClassificationConfig& c = cfg.classification;
    c.name = name;
    c.seed = seed;
    c.optimizers = optimizers;
    c.settings = settings;
    c.workers = workers;
    if (const json* v = find(doc, "loss")) c.losses = get_losses(*v);
    for (const char* key : {"repetitions", "iterations", "checkpoints"})
      if (doc.contains(key)) throw ConfigError(key, "not valid for classification runs");
    parse_dataset(doc["dataset"], base_dir, cfg.dataset, c);
    c.validate();
  }

  if (const json* sw = find(doc, "sweep")) {
    if (!sw->is_object()) throw ConfigError("sweep", "expected an object");
    reject_unknown(*sw, "sweep.", {"particles"});
    const json* p = find(*sw, "particles");
    if (!p) throw ConfigError("sweep.particles", "missing");
    cfg.sweep = get_counts(*p, "sweep.particles");
    if (cfg.sweep.empty()) throw ConfigError("sweep.particles", "list at least one particle count");
    for (std::size_t n : cfg.sweep)
      if (n < 1) throw ConfigError("sweep.particles", "particle counts must be >= 1");
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", fmt::format("cannot open '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

Dataset load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  Dataset ds = load_csv_dataset(spec.path, spec.schema, true, spec.name);
  if (spec.subsample && *spec.subsample < ds.size()) {
    RngStream rng(derive_seed(seed, 0x5ab5a3b1e));
    ds = subsample(ds, *spec.subsample, rng);
  }
  ds.validate();
  return ds;
}

}  // namespace filtopt
