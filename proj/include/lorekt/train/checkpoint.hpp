#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "lorekt/data/types.hpp"
#include "lorekt/data/vocab.hpp"
#include "lorekt/model/config.hpp"
#include "lorekt/model/model.hpp"

namespace lorekt::train {

struct TrainingMetadata {
  std::string stage;  // "pretrain", "finetune", ...
  std::size_t epoch = 0;
  double best_val_auc = 0.0;
  std::uint64_t seed = 0;
  std::size_t steps = 0;

  nlohmann::json to_json() const;
  static TrainingMetadata from_json(const nlohmann::json& j);
  friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

struct NamedArray {
  std::string name;
  ag::Shape shape;
  std::vector<float> values;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

// File layout: "LRKT" | u32 version | u64 header length | JSON header |
// little-endian f32 payload in manifest order | SHA-256 of all prior bytes.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  model::ModelConfig config;
  data::GlobalVocab vocab;
  std::vector<data::DatasetSpec> datasets;
  TrainingMetadata metadata;
  std::vector<NamedArray> parameters;

  template <typename T>
  static Checkpoint from_model(const model::LoReKTModel<T>& model, std::vector<data::DatasetSpec> datasets,
                               TrainingMetadata metadata);
  // Rebuilds the model; parameter names and shapes must match the layout.
  template <typename T>
  model::LoReKTModel<T> to_model() const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> serialize(const Checkpoint& checkpoint);
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void save(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

}  // namespace lorekt::train
