#pragma once

#include <filesystem>
#include <json.hpp>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lorekt/data/types.hpp"
#include "lorekt/model/model.hpp"

namespace lorekt::importance {

using model::LayerId;
using model::SublayerKind;

struct LayerImportance {
  LayerId layer;
  std::vector<double> values;  // non-negative, one per output unit
  bool normalized = false;
};

// Importance vectors of every gated sublayer for one target dataset.
struct ImportanceProfile {
  std::string dataset;
  std::size_t n_samples = 0;
  std::map<LayerId, LayerImportance> layers;

  // Same value for every unit of every sublayer.
  static ImportanceProfile constant(const model::ModelConfig& config, double value, std::string dataset = "constant");

  // Throws unless the profile covers exactly the 3 * n_layers sublayers of
  // `config` with matching widths.
  void check_complete(const model::ModelConfig& config) const;

  nlohmann::json to_json() const;
  static ImportanceProfile from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static ImportanceProfile load(const std::filesystem::path& path);
};

// Divides each layer by its maximum (all-zero layers stay zero).
void normalize(ImportanceProfile& profile);

struct ImportanceOptions {
  std::size_t batch_size = 1;
  bool normalize = true;
  double loss_scale = 1.0;
};

// Average absolute gate gradient of the loss over the target training
// segments: I_l = (1/N) sum_batches |dL/dg_l|, N = number of segments. The
// model must already know the dataset (see zero_shot_adapt). Runs in eval
// mode and leaves every model parameter untouched.
template <typename T>
ImportanceProfile compute_importance(model::LoReKTModel<T>& model, std::span<const data::StudentSequence> segments,
                                     const data::DatasetSpec& dataset, const ImportanceOptions& options = {});

// Copies importance value i into output row i of a sublayer parameter:
// weight [out x in] gets row i filled with values[i]; bias [out] is values.
template <typename T>
ag::Tensor<T> expand_importance(const LayerImportance& importance, const ag::Shape& parameter_shape);

// Replaces the gradient of every gated-sublayer parameter with
// expand_importance(I_l) * gradient. Other parameters pass through.
template <typename T>
class GradientModulator {
 public:
  GradientModulator(const model::LoReKTModel<T>& model, const ImportanceProfile& profile);

  void apply(model::LoReKTModel<T>& model) const;
  // Expanded mask for a parameter index, or nullptr if it is not modulated.
  const ag::Tensor<T>* mask(std::size_t parameter_index) const;

 private:
  std::vector<ag::Tensor<T>> masks_;  // empty tensor for pass-through parameters
};

template <typename T>
void modulate(model::LoReKTModel<T>& model, const ImportanceProfile& profile);

}  // namespace lorekt::importance
