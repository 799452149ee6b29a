#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "lorekt/data/preprocess.hpp"
#include "lorekt/data/synthetic.hpp"
#include "lorekt/data/types.hpp"
#include "lorekt/model/config.hpp"
#include "lorekt/train/trainer.hpp"

namespace lorekt::cli {

enum class DatasetRole { kRich, kLow };

struct DatasetEntry {
  data::DatasetSpec spec;  // path already resolved against the config directory
  DatasetRole role = DatasetRole::kRich;
  std::optional<data::SyntheticConfig> synthetic;
};

// Parsed and validated experiment document; see docs/experiment_config.schema.json.
struct ExperimentConfig {
  std::filesystem::path base_dir;
  std::uint64_t seed = 0;
  std::vector<DatasetEntry> datasets;
  model::ModelConfig model;  // vocabulary fields are filled later
  train::TrainConfig train;
  std::optional<train::TrainConfig> finetune;  // overrides `train` for fine-tuning when present
  data::PreprocessOptions preprocess;
  std::optional<data::SyntheticConfig> synthetic;  // default generator for --out
  std::filesystem::path workdir;
  std::filesystem::path checkpoints;
  nlohmann::json raw;

  static ExperimentConfig parse(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);

  const DatasetEntry& dataset(const std::string& name) const;
  std::vector<const DatasetEntry*> rich() const;
  train::TrainConfig finetune_config() const { return finetune.value_or(train); }
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

}  // namespace lorekt::cli
