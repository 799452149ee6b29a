#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <span>
#include <vector>

#include "lorekt/data/types.hpp"
#include "lorekt/importance/importance.hpp"
#include "lorekt/model/model.hpp"

namespace lorekt::train {

struct TrainConfig {
  double learning_rate = 1e-3;
  double dropout = 0.1;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;     // global gradient norm; 0 disables
  std::size_t max_steps = 0;  // 0 means no limit; otherwise stop after this many optimizer steps
  std::size_t bucket_batches = 16;  // length bucketing window in batches; 0 shuffles plainly

  // Throws on invalid values; warns for values off the default grid.
  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainDataset {
  data::DatasetSpec spec;
  std::span<const data::StudentSequence> train;
  std::span<const data::StudentSequence> valid;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_auc = 0.0;
  std::size_t steps = 0;  // cumulative
};

template <typename T>
struct TrainResult {
  model::LoReKTModel<T> model;  // best-validation parameters
  std::size_t best_epoch = 0;
  double best_val_auc = 0.0;
  std::size_t epochs_run = 0;
  std::size_t steps = 0;
  std::vector<EpochRecord> history;
};

// Shared loop: mixed single-dataset batches, masked BCE, optional gradient
// modulation, global-norm clipping, Adam, then validation AUC averaged over
// datasets with early stopping.
template <typename T>
TrainResult<T> train(model::LoReKTModel<T> model, std::span<const TrainDataset> datasets, const TrainConfig& config,
                     const importance::ImportanceProfile* profile = nullptr);

template <typename T>
TrainResult<T> pretrain(model::LoReKTModel<T> model, std::span<const TrainDataset> datasets,
                        const TrainConfig& config);

// `model` must already cover the dataset (zero_shot_adapt).
template <typename T>
TrainResult<T> finetune(model::LoReKTModel<T> model, const TrainDataset& dataset, const TrainConfig& config,
                        const importance::ImportanceProfile* profile = nullptr);

struct GridPoint {
  double learning_rate;
  double dropout;
  double best_val_auc;
};

template <typename T>
struct GridResult {
  TrainResult<T> best;
  TrainConfig best_config;
  std::vector<GridPoint> points;
};

// Trains once per (learning rate, dropout) pair and keeps the best run.
template <typename T>
GridResult<T> grid_search(const model::LoReKTModel<T>& model, std::span<const TrainDataset> datasets,
                          const TrainConfig& base, std::span<const double> learning_rates,
                          std::span<const double> dropouts, const importance::ImportanceProfile* profile = nullptr);

}  // namespace lorekt::train
