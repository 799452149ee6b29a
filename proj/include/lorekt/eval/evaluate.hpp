#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "lorekt/data/types.hpp"
#include "lorekt/model/model.hpp"

namespace lorekt::eval {

struct MetricsReport {
  std::string dataset;
  std::string split;
  double auc = 0.0;
  double accuracy = 0.0;
  std::size_t n_predictions = 0;
  double threshold = 0.5;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Pooled (prediction, label) pairs over steps 2..len of every segment.
struct Predictions {
  std::vector<double> probs;
  std::vector<std::uint8_t> labels;
};

template <typename T>
Predictions collect_predictions(model::LoReKTModel<T>& model, std::span<const data::StudentSequence> segments,
                                std::uint32_t dataset_index, std::size_t batch_size = 64);

template <typename T>
MetricsReport evaluate_split(model::LoReKTModel<T>& model, std::span<const data::StudentSequence> segments,
                             const data::DatasetSpec& dataset, const std::string& split, std::size_t batch_size = 64);

struct EvalSplit {
  data::DatasetSpec dataset;
  std::string split;
  std::span<const data::StudentSequence> segments;
};

template <typename T>
std::vector<MetricsReport> evaluate(model::LoReKTModel<T>& model, std::span<const EvalSplit> splits,
                                    std::size_t batch_size = 64);

nlohmann::json reports_to_json(std::span<const MetricsReport> reports);
std::vector<MetricsReport> reports_from_json(const nlohmann::json& j);
// Header "dataset,split,n,auc,accuracy" then one row per report.
std::string reports_to_csv(std::span<const MetricsReport> reports);
// Throws DataError unless `j` is an array of well-formed reports.
void validate_reports(const nlohmann::json& j);
void write_reports(std::span<const MetricsReport> reports, const std::filesystem::path& json_path,
                   const std::filesystem::path& csv_path);

}  // namespace lorekt::eval
