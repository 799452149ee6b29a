#include "lorekt/model/config.hpp"

#include "lorekt/common/error.hpp"

namespace lorekt::model {

namespace {

struct PresetRow {
  const char* name;
  std::size_t n_layers, d_model, n_head, d_ff;
};

constexpr PresetRow kPresets[] = {
    {"base-89M", 4, 256, 8, 256},     {"base-221M", 24, 512, 16, 1024}, {"base-478M", 24, 1024, 16, 1024},
    {"base-1.01B", 32, 1536, 24, 2560}, {"tiny", 2, 16, 2, 32},          {"small", 4, 64, 4, 128},
};

}  // namespace

ModelConfig ModelConfig::preset(const std::string& name) {
  for (const auto& row : kPresets) {
    if (name == row.name) {
      ModelConfig c;
      c.n_layers = row.n_layers;
      c.d_model = row.d_model;
      c.n_head = row.n_head;
      c.d_ff = row.d_ff;
      return c;
    }
  }
  throw ConfigError("unknown model preset '" + name + "'");
}

std::vector<std::string> ModelConfig::preset_names() {
  std::vector<std::string> names;
  for (const auto& row : kPresets) names.emplace_back(row.name);
  return names;
}

ModelConfig ModelConfig::with_vocab(const data::GlobalVocab& vocab) const {
  ModelConfig c = *this;
  c.n_questions = vocab.question_table_rows();
  c.n_kcs = vocab.kc_table_rows();
  c.n_datasets = vocab.dataset_table_rows();
  return c;
}

void ModelConfig::validate() const {
  if (n_layers == 0 || d_model == 0 || n_head == 0 || d_ff == 0 || max_seq_len == 0) {
    throw ConfigError("model: n_layers, d_model, n_head, d_ff and max_seq_len must be positive");
  }
  if (d_model % n_head != 0) {
    throw ConfigError("model: d_model (" + std::to_string(d_model) + ") is not divisible by n_head (" +
                      std::to_string(n_head) + ")");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must lie in [0, 1)");
  if (n_questions == 0 || n_kcs == 0 || n_datasets == 0) {
    throw ConfigError("model: embedding tables need at least one row (size the config from a vocabulary)");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"n_layers", n_layers},       {"d_model", d_model},         {"n_head", n_head},
          {"d_ff", d_ff},               {"dropout", dropout},         {"max_seq_len", max_seq_len},
          {"n_questions", n_questions}, {"n_kcs", n_kcs},             {"n_datasets", n_datasets}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_head = j.at("n_head").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  c.n_questions = j.at("n_questions").get<std::size_t>();
  c.n_kcs = j.at("n_kcs").get<std::size_t>();
  c.n_datasets = j.at("n_datasets").get<std::size_t>();
  return c;
}

std::size_t count_parameters(const ModelConfig& c) {
  const std::size_t d = c.d_model, f = c.d_ff;
  const std::size_t embeddings = (c.n_questions + c.n_kcs + 2 + 2 + c.n_datasets + c.max_seq_len) * d;
  const std::size_t attention = 4 * (d * d + d);
  const std::size_t ffn = (f * d + f) + (d * f + d);
  const std::size_t norms = 2 * (2 * d);
  const std::size_t block = attention + ffn + norms;
  const std::size_t final_norm = 2 * d;
  const std::size_t head = (f * d + f) + (f + 1);
  return embeddings + c.n_layers * block + final_norm + head;
}

}  // namespace lorekt::model
