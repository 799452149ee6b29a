#include "lorekt/importance/importance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "lorekt/common/error.hpp"
#include "lorekt/common/logging.hpp"

namespace lorekt::importance {

ImportanceProfile ImportanceProfile::constant(const model::ModelConfig& config, double value, std::string dataset) {
  ImportanceProfile p;
  p.dataset = std::move(dataset);
  for (std::size_t b = 0; b < config.n_layers; ++b) {
    for (auto kind : {SublayerKind::kAttention, SublayerKind::kIntermediate, SublayerKind::kOutput}) {
      const LayerId id{b, kind};
      p.layers[id] = {id, std::vector<double>(model::sublayer_width(config, kind), value), value == 1.0};
    }
  }
  return p;
}

void ImportanceProfile::check_complete(const model::ModelConfig& config) const {
  for (std::size_t b = 0; b < config.n_layers; ++b) {
    for (auto kind : {SublayerKind::kAttention, SublayerKind::kIntermediate, SublayerKind::kOutput}) {
      const auto it = layers.find({b, kind});
      const std::string name = "block " + std::to_string(b) + " " + std::string(model::to_string(kind));
      if (it == layers.end()) throw DataError("importance profile is missing " + name);
      if (it->second.values.size() != model::sublayer_width(config, kind)) {
        throw DataError("importance profile width for " + name + " is " + std::to_string(it->second.values.size()) +
                        ", model expects " + std::to_string(model::sublayer_width(config, kind)));
      }
    }
  }
  if (layers.size() != 3 * config.n_layers) {
    throw DataError("importance profile has " + std::to_string(layers.size()) + " layers, model has " +
                    std::to_string(3 * config.n_layers));
  }
}

nlohmann::json ImportanceProfile::to_json() const {
  nlohmann::json out_layers = nlohmann::json::array();
  for (const auto& [id, imp] : layers) {
    std::vector<float> values(imp.values.begin(), imp.values.end());
    out_layers.push_back({{"block", id.block}, {"kind", std::string(model::to_string(id.kind))}, {"values", values}});
  }
  return {{"dataset", dataset}, {"n_samples", n_samples}, {"layers", out_layers}};
}

ImportanceProfile ImportanceProfile::from_json(const nlohmann::json& j) {
  ImportanceProfile p;
  try {
    p.dataset = j.at("dataset").get<std::string>();
    p.n_samples = j.at("n_samples").get<std::size_t>();
    for (const auto& l : j.at("layers")) {
      LayerImportance imp;
      imp.layer = {l.at("block").get<std::size_t>(), model::parse_sublayer_kind(l.at("kind").get<std::string>())};
      for (const auto& v : l.at("values")) imp.values.push_back(static_cast<double>(v.get<float>()));
      if (std::any_of(imp.values.begin(), imp.values.end(), [](double v) { return !(v >= 0.0) || !std::isfinite(v); })) {
        throw DataError("importance values must be finite and non-negative");
      }
      const double mx = imp.values.empty() ? 0.0 : *std::max_element(imp.values.begin(), imp.values.end());
      imp.normalized = mx == 1.0;
      if (!p.layers.emplace(imp.layer, imp).second) throw DataError("importance profile repeats a layer");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed importance profile: ") + e.what());
  }
  return p;
}

void ImportanceProfile::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write importance profile " + path.string());
  out << to_json().dump(2) << '\n';
}

ImportanceProfile ImportanceProfile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open importance profile " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("importance profile " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void normalize(ImportanceProfile& profile) {
  for (auto& [id, imp] : profile.layers) {
    const double mx = imp.values.empty() ? 0.0 : *std::max_element(imp.values.begin(), imp.values.end());
    if (mx > 0.0) {
      for (auto& v : imp.values) v /= mx;
    }
    imp.normalized = true;
  }
}

namespace {

// Restores requires_grad flags on scope exit.
template <typename T>
class FreezeParameters {
 public:
  explicit FreezeParameters(model::LoReKTModel<T>& m) : model_(m) {
    for (auto& p : m.parameters()) {
      saved_.push_back(p.requires_grad);
      p.requires_grad = false;
    }
  }
  ~FreezeParameters() {
    auto& params = model_.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].requires_grad = saved_[i];
  }

 private:
  model::LoReKTModel<T>& model_;
  std::vector<bool> saved_;
};

}  // namespace

template <typename T>
ImportanceProfile compute_importance(model::LoReKTModel<T>& model, std::span<const data::StudentSequence> segments,
                                     const data::DatasetSpec& dataset, const ImportanceOptions& options) {
  if (segments.empty()) throw DataError("compute_importance: dataset '" + dataset.name + "' has no segments");
  if (options.batch_size == 0) throw ConfigError("compute_importance: batch_size must be positive");
  if (!model.vocab().contains(dataset.dataset_index)) {
    throw DataError("compute_importance: model vocabulary does not include dataset '" + dataset.name + "'");
  }

  const model::ModelConfig& config = model.config();
  model::GateSet<T> gates(config);
  std::map<LayerId, std::vector<double>> sums;
  for (const auto& id : gates.layers()) sums[id].assign(gates.gate(id).width(), 0.0);

  FreezeParameters<T> freeze(model);
  for (std::size_t start = 0; start < segments.size(); start += options.batch_size) {
    const std::size_t len = std::min(options.batch_size, segments.size() - start);
    const data::Batch batch = data::make_batch(segments.subspan(start, len), model.vocab(), dataset.dataset_index);
    gates.reset();
    ag::Tape<T> tape;
    const auto out = model.forward(tape, batch, {.train = false, .rng = nullptr, .gates = &gates});
    bool any = false;
    for (std::size_t i = 0; i < out.mask.size(); ++i) any = any || out.mask[i] != T(0);
    if (!any) continue;
    ag::Var<T> loss = ag::bce_loss(out.probs, out.targets, out.mask);
    if (options.loss_scale != 1.0) loss = ag::scale(loss, static_cast<T>(options.loss_scale));
    tape.backward(loss);
    for (const auto& id : gates.layers()) {
      const auto grad = gates.gate(id).captured_grad();
      auto& acc = sums[id];
      for (std::size_t j = 0; j < grad.size(); ++j) acc[j] += std::abs(static_cast<double>(grad[j]));
    }
  }

  ImportanceProfile profile;
  profile.dataset = dataset.name;
  profile.n_samples = segments.size();
  bool all_zero = true;
  for (auto& [id, acc] : sums) {
    for (auto& v : acc) {
      v /= static_cast<double>(segments.size());
      all_zero = all_zero && v == 0.0;
    }
    profile.layers[id] = {id, std::move(acc), false};
  }
  if (all_zero) logger()->warn("importance for dataset '{}' is zero in every layer; the model looks degenerate", dataset.name);
  if (options.normalize) normalize(profile);
  return profile;
}

template <typename T>
ag::Tensor<T> expand_importance(const LayerImportance& importance, const ag::Shape& parameter_shape) {
  const auto& v = importance.values;
  if (parameter_shape.empty() || parameter_shape.size() > 2 || parameter_shape[0] != v.size()) {
    throw ShapeError("expand_importance: importance width " + std::to_string(v.size()) +
                     " does not match parameter shape " + ag::to_string(parameter_shape));
  }
  ag::Tensor<T> mask(parameter_shape);
  const std::size_t cols = parameter_shape.size() == 2 ? parameter_shape[1] : 1;
  for (std::size_t r = 0; r < v.size(); ++r) {
    std::fill(mask.data() + r * cols, mask.data() + (r + 1) * cols, static_cast<T>(v[r]));
  }
  return mask;
}

template <typename T>
GradientModulator<T>::GradientModulator(const model::LoReKTModel<T>& model, const ImportanceProfile& profile)
    : masks_(model.parameters().size()) {
  profile.check_complete(model.config());
  for (const auto& [id, imp] : profile.layers) {
    for (std::size_t idx : model.sublayer_parameters(id)) {
      masks_[idx] = expand_importance<T>(imp, model.parameters()[idx].value.shape());
    }
  }
}

template <typename T>
void GradientModulator<T>::apply(model::LoReKTModel<T>& model) const {
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (masks_[i].empty() || !params[i].has_grad()) continue;
    T* g = params[i].grad.data();
    const T* m = masks_[i].data();
    for (std::size_t k = 0; k < masks_[i].size(); ++k) g[k] *= m[k];
  }
}

template <typename T>
const ag::Tensor<T>* GradientModulator<T>::mask(std::size_t parameter_index) const {
  const auto& m = masks_.at(parameter_index);
  return m.empty() ? nullptr : &m;
}

template <typename T>
void modulate(model::LoReKTModel<T>& model, const ImportanceProfile& profile) {
  GradientModulator<T>(model, profile).apply(model);
}

template ImportanceProfile compute_importance(model::LoReKTModel<float>&, std::span<const data::StudentSequence>,
                                              const data::DatasetSpec&, const ImportanceOptions&);
template ImportanceProfile compute_importance(model::LoReKTModel<double>&, std::span<const data::StudentSequence>,
                                              const data::DatasetSpec&, const ImportanceOptions&);
template ag::Tensor<float> expand_importance(const LayerImportance&, const ag::Shape&);
template ag::Tensor<double> expand_importance(const LayerImportance&, const ag::Shape&);
template class GradientModulator<float>;
template class GradientModulator<double>;
template void modulate(model::LoReKTModel<float>&, const ImportanceProfile&);
template void modulate(model::LoReKTModel<double>&, const ImportanceProfile&);

}  // namespace lorekt::importance
