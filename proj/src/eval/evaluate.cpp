#include "lorekt/eval/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "lorekt/common/error.hpp"
#include "lorekt/data/batching.hpp"
#include "lorekt/eval/metrics.hpp"

namespace lorekt::eval {

template <typename T>
Predictions collect_predictions(model::LoReKTModel<T>& model, std::span<const data::StudentSequence> segments,
                                std::uint32_t dataset_index, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("evaluation batch_size must be positive");
  Predictions out;
  for (std::size_t start = 0; start < segments.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, segments.size() - start);
    const auto batch = data::make_batch(segments.subspan(start, n), model.vocab(), dataset_index);
    const auto probs = model.predict(batch);
    const std::size_t L = batch.seq_len;
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
      for (std::size_t j = 0; j + 1 < L; ++j) {
        const std::size_t next = b * L + j + 1;
        if (!batch.valid[next]) continue;
        out.probs.push_back(static_cast<double>(probs[b * L + j]));
        out.labels.push_back(batch.responses[next]);
      }
    }
  }
  return out;
}

template <typename T>
MetricsReport evaluate_split(model::LoReKTModel<T>& model, std::span<const data::StudentSequence> segments,
                             const data::DatasetSpec& dataset, const std::string& split, std::size_t batch_size) {
  if (segments.empty()) throw DataError("split '" + split + "' of dataset '" + dataset.name + "' is empty");
  const auto p = collect_predictions(model, segments, dataset.dataset_index, batch_size);
  MetricsReport r;
  r.dataset = dataset.name;
  r.split = split;
  r.n_predictions = p.probs.size();
  try {
    r.auc = auc(p.probs, p.labels);
    r.accuracy = accuracy(p.probs, p.labels, r.threshold);
  } catch (const DataError& e) {
    throw DataError("dataset '" + dataset.name + "' split '" + split + "': " + e.what());
  }
  return r;
}

template <typename T>
std::vector<MetricsReport> evaluate(model::LoReKTModel<T>& model, std::span<const EvalSplit> splits,
                                    std::size_t batch_size) {
  std::vector<MetricsReport> out;
  for (const auto& s : splits) out.push_back(evaluate_split(model, s.segments, s.dataset, s.split, batch_size));
  return out;
}

nlohmann::json reports_to_json(std::span<const MetricsReport> reports) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) {
    j.push_back({{"dataset", r.dataset},
                 {"split", r.split},
                 {"auc", r.auc},
                 {"accuracy", r.accuracy},
                 {"n_predictions", r.n_predictions},
                 {"threshold", r.threshold}});
  }
  return j;
}

void validate_reports(const nlohmann::json& j) {
  if (!j.is_array()) throw DataError("metrics report must be a JSON array");
  static const std::vector<std::string> keys = {"dataset", "split", "auc", "accuracy", "n_predictions", "threshold"};
  for (const auto& r : j) {
    if (!r.is_object()) throw DataError("metrics report entries must be objects");
    for (const auto& [key, value] : r.items()) {
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw DataError("unknown report field '" + key + "'");
    }
    for (const auto& key : keys) {
      if (!r.contains(key)) throw DataError("report is missing '" + key + "'");
    }
    if (!r["dataset"].is_string() || !r["split"].is_string()) throw DataError("report dataset/split must be strings");
    if (!r["n_predictions"].is_number_unsigned() || r["n_predictions"].get<std::size_t>() == 0) {
      throw DataError("report n_predictions must be a positive integer");
    }
    for (const char* key : {"auc", "accuracy", "threshold"}) {
      if (!r[key].is_number()) throw DataError(std::string("report ") + key + " must be a number");
      const double v = r[key].get<double>();
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw DataError(std::string("report ") + key + " outside [0, 1]");
    }
  }
}

std::vector<MetricsReport> reports_from_json(const nlohmann::json& j) {
  validate_reports(j);
  std::vector<MetricsReport> out;
  for (const auto& r : j) {
    out.push_back({r["dataset"].get<std::string>(), r["split"].get<std::string>(), r["auc"].get<double>(),
                   r["accuracy"].get<double>(), r["n_predictions"].get<std::size_t>(), r["threshold"].get<double>()});
  }
  return out;
}

std::string reports_to_csv(std::span<const MetricsReport> reports) {
  std::string out = "dataset,split,n,auc,accuracy\n";
  char buf[64];
  for (const auto& r : reports) {
    out += r.dataset + "," + r.split + "," + std::to_string(r.n_predictions);
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", r.auc, r.accuracy);
    out += buf;
  }
  return out;
}

void write_reports(std::span<const MetricsReport> reports, const std::filesystem::path& json_path,
                   const std::filesystem::path& csv_path) {
  for (const auto& p : {json_path, csv_path}) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  }
  std::ofstream j(json_path);
  j << reports_to_json(reports).dump(2) << '\n';
  std::ofstream c(csv_path);
  c << reports_to_csv(reports);
  if (!j || !c) throw DataError("failed writing metrics reports");
}

template Predictions collect_predictions(model::LoReKTModel<float>&, std::span<const data::StudentSequence>,
                                         std::uint32_t, std::size_t);
template Predictions collect_predictions(model::LoReKTModel<double>&, std::span<const data::StudentSequence>,
                                         std::uint32_t, std::size_t);
template MetricsReport evaluate_split(model::LoReKTModel<float>&, std::span<const data::StudentSequence>,
                                      const data::DatasetSpec&, const std::string&, std::size_t);
template MetricsReport evaluate_split(model::LoReKTModel<double>&, std::span<const data::StudentSequence>,
                                      const data::DatasetSpec&, const std::string&, std::size_t);
template std::vector<MetricsReport> evaluate(model::LoReKTModel<float>&, std::span<const EvalSplit>, std::size_t);
template std::vector<MetricsReport> evaluate(model::LoReKTModel<double>&, std::span<const EvalSplit>, std::size_t);

}  // namespace lorekt::eval
