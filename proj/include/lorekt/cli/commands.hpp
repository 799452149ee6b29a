#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>

#include "lorekt/cli/experiment_config.hpp"

namespace lorekt::cli {

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> profile;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> dataset;
  std::optional<std::uint64_t> seed;
};

// Loads the config, applying a --seed override before stage seeds are derived.
ExperimentConfig load_config(const CommandOptions& options);

// Each command returns the fields of its stdout summary line.
nlohmann::json run_synth(const ExperimentConfig& config, const CommandOptions& options);
nlohmann::json run_preprocess(const ExperimentConfig& config, const CommandOptions& options);
nlohmann::json run_pretrain(const ExperimentConfig& config, const CommandOptions& options);
nlohmann::json run_importance(const ExperimentConfig& config, const CommandOptions& options);
nlohmann::json run_finetune(const ExperimentConfig& config, const CommandOptions& options);
nlohmann::json run_eval(const ExperimentConfig& config, const CommandOptions& options);

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Entry point of the `lorekt` executable.
int main(int argc, char** argv);

}  // namespace lorekt::cli
