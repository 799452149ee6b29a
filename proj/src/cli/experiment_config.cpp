#include "lorekt/cli/experiment_config.hpp"

#include <fstream>
#include <set>

#include "lorekt/common/error.hpp"
#include "lorekt/common/hashing.hpp"

namespace lorekt::cli {

namespace {

using nlohmann::json;

void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : keys) ok = ok || key == k;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename V>
V get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

model::ModelConfig parse_model(const json& j) {
  allow_keys(j, "model", {"preset", "n_layers", "d_model", "n_head", "d_ff", "dropout", "max_seq_len"});
  model::ModelConfig c;
  if (j.contains("preset")) {
    c = model::ModelConfig::preset(get<std::string>(j, "preset", "model"));
  } else {
    for (const char* k : {"n_layers", "d_model", "n_head", "d_ff"}) {
      if (!j.contains(k)) throw ConfigError(std::string("model: '") + k + "' is required without a preset");
    }
  }
  if (j.contains("n_layers")) c.n_layers = get<std::size_t>(j, "n_layers", "model");
  if (j.contains("d_model")) c.d_model = get<std::size_t>(j, "d_model", "model");
  if (j.contains("n_head")) c.n_head = get<std::size_t>(j, "n_head", "model");
  if (j.contains("d_ff")) c.d_ff = get<std::size_t>(j, "d_ff", "model");
  if (j.contains("dropout")) c.dropout = get<double>(j, "dropout", "model");
  if (j.contains("max_seq_len")) c.max_seq_len = get<std::size_t>(j, "max_seq_len", "model");
  return c;
}

data::PreprocessOptions parse_preprocess(const json& j) {
  allow_keys(j, "preprocess", {"min_length", "max_length", "trainval_fraction", "train_fraction"});
  data::PreprocessOptions o;
  if (j.contains("min_length")) o.min_length = get<std::size_t>(j, "min_length", "preprocess");
  if (j.contains("max_length")) o.max_length = get<std::size_t>(j, "max_length", "preprocess");
  if (j.contains("trainval_fraction")) o.trainval_fraction = get<double>(j, "trainval_fraction", "preprocess");
  if (j.contains("train_fraction")) o.train_fraction = get<double>(j, "train_fraction", "preprocess");
  if (o.min_length < 2 || o.max_length < o.min_length) throw ConfigError("preprocess: need 2 <= min_length <= max_length");
  if (!(o.trainval_fraction > 0 && o.trainval_fraction < 1) || !(o.train_fraction > 0 && o.train_fraction < 1)) {
    throw ConfigError("preprocess: fractions must be in (0, 1)");
  }
  return o;
}

// A synthetic block without a seed gets one derived from the experiment seed.
data::SyntheticConfig parse_synthetic(const json& j, std::uint64_t seed, const std::string& stage) {
  auto c = data::SyntheticConfig::from_json(j);
  if (!j.contains("seed")) c.seed = derive_seed(seed, stage);
  return c;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const json& j, const std::filesystem::path& base_dir) {
  allow_keys(j, "config", {"seed", "datasets", "model", "train", "finetune", "preprocess", "paths", "synthetic"});
  ExperimentConfig c;
  c.raw = j;
  c.base_dir = base_dir;
  for (const char* k : {"seed", "datasets", "model"}) {
    if (!j.contains(k)) throw ConfigError(std::string("config: missing required section '") + k + "'");
  }
  c.seed = get<std::uint64_t>(j, "seed", "config");

  const auto& ds = j.at("datasets");
  if (!ds.is_array() || ds.empty()) throw ConfigError("datasets: expected a non-empty array");
  std::set<std::string> names;
  std::set<std::uint32_t> indices;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::string where = "datasets[" + std::to_string(i) + "]";
    allow_keys(ds[i], where, {"name", "dataset_index", "path", "role", "synthetic"});
    DatasetEntry e;
    e.spec.name = get<std::string>(ds[i], "name", where);
    e.spec.dataset_index = get<std::uint32_t>(ds[i], "dataset_index", where);
    e.spec.path = c.resolve(get<std::string>(ds[i], "path", where)).string();
    if (e.spec.name.empty()) throw ConfigError(where + ".name must not be empty");
    if (!names.insert(e.spec.name).second) throw ConfigError("duplicate dataset name '" + e.spec.name + "'");
    if (!indices.insert(e.spec.dataset_index).second) {
      throw ConfigError("duplicate dataset_index " + std::to_string(e.spec.dataset_index));
    }
    if (ds[i].contains("role")) {
      const auto role = get<std::string>(ds[i], "role", where);
      if (role == "rich") e.role = DatasetRole::kRich;
      else if (role == "low") e.role = DatasetRole::kLow;
      else throw ConfigError(where + ".role must be \"rich\" or \"low\"");
    }
    if (ds[i].contains("synthetic")) e.synthetic = parse_synthetic(ds[i]["synthetic"], c.seed, "synth/" + e.spec.name);
    c.datasets.push_back(std::move(e));
  }

  c.model = parse_model(j.at("model"));
  for (const char* section : {"train", "finetune"}) {
    if (j.contains(section) && j[section].is_object() && j[section].contains("seed")) {
      throw ConfigError(std::string(section) + ".seed is not allowed; stage seeds derive from the top-level seed");
    }
  }
  if (j.contains("train")) c.train = train::TrainConfig::from_json(j["train"]);
  if (j.contains("finetune")) c.finetune = train::TrainConfig::from_json(j["finetune"]);
  if (j.contains("preprocess")) c.preprocess = parse_preprocess(j["preprocess"]);
  if (j.contains("synthetic")) c.synthetic = parse_synthetic(j["synthetic"], c.seed, "synth");

  c.workdir = c.resolve("work");
  if (j.contains("paths")) {
    allow_keys(j["paths"], "paths", {"workdir", "checkpoints"});
    if (j["paths"].contains("workdir")) c.workdir = c.resolve(get<std::string>(j["paths"], "workdir", "paths"));
  }
  c.checkpoints = c.workdir / "checkpoints";
  if (j.contains("paths") && j["paths"].contains("checkpoints")) {
    c.checkpoints = c.resolve(get<std::string>(j["paths"], "checkpoints", "paths"));
  }

  // Validate numeric ranges up front; warnings for off-grid values go to stderr.
  try {
    c.train.validate();
    if (c.finetune) c.finetune->validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  auto probe = c.model;
  probe.n_questions = probe.n_kcs = probe.n_datasets = 1;
  probe.validate();
  if (c.model.max_seq_len < c.preprocess.max_length) {
    throw ConfigError("model.max_seq_len (" + std::to_string(c.model.max_seq_len) +
                      ") is shorter than preprocess.max_length (" + std::to_string(c.preprocess.max_length) + ")");
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse(j, std::filesystem::absolute(path).parent_path());
}

const DatasetEntry& ExperimentConfig::dataset(const std::string& name) const {
  for (const auto& d : datasets) {
    if (d.spec.name == name) return d;
  }
  throw ConfigError("dataset '" + name + "' is not declared in the config");
}

std::vector<const DatasetEntry*> ExperimentConfig::rich() const {
  std::vector<const DatasetEntry*> out;
  for (const auto& d : datasets) {
    if (d.role == DatasetRole::kRich) out.push_back(&d);
  }
  return out;
}

std::filesystem::path ExperimentConfig::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : (base_dir / p).lexically_normal();
}

}  // namespace lorekt::cli
