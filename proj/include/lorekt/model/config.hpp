#pragma once

#include <cstddef>
#include <json.hpp>
#include <string>
#include <vector>

#include "lorekt/data/vocab.hpp"

namespace lorekt::model {

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t d_model = 16;
  std::size_t n_head = 2;
  std::size_t d_ff = 32;
  double dropout = 0.1;
  std::size_t max_seq_len = 200;
  // Embedding-table row counts; filled from the vocabulary by with_vocab().
  std::size_t n_questions = 0;
  std::size_t n_kcs = 0;
  std::size_t n_datasets = 0;

  // Named architectures: "base-89M", "base-221M", "base-478M", "base-1.01B",
  // plus "tiny" (2,16,2,32) and "small" (4,64,4,128) for desk-scale runs.
  static ModelConfig preset(const std::string& name);
  static std::vector<std::string> preset_names();

  // Copies of this config sized to the vocabulary's tables.
  ModelConfig with_vocab(const data::GlobalVocab& vocab) const;

  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Closed-form trainable parameter count of the architecture.
std::size_t count_parameters(const ModelConfig& config);

}  // namespace lorekt::model
