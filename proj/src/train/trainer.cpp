#include "lorekt/train/trainer.hpp"

#include <cmath>
#include <deque>
#include <sstream>

#include "lorekt/common/error.hpp"
#include "lorekt/common/hashing.hpp"
#include "lorekt/common/logging.hpp"
#include "lorekt/common/random.hpp"
#include "lorekt/data/batching.hpp"
#include "lorekt/eval/evaluate.hpp"
#include "lorekt/train/adam.hpp"
#include "lorekt/train/early_stopping.hpp"

namespace lorekt::train {

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be positive");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("train.dropout must be in [0, 1)");
  if (max_epochs == 0) throw ConfigError("train.max_epochs must be positive");
  if (patience == 0) throw ConfigError("train.patience must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("train betas must be in [0, 1)");
  if (!(eps > 0)) throw ConfigError("train.eps must be positive");
  if (!(clip_norm >= 0)) throw ConfigError("train.clip_norm must be non-negative");
  if (learning_rate != 1e-3 && learning_rate != 1e-4) {
    logger()->warn("learning rate {} is outside the default grid {{0.001, 0.0001}}", learning_rate);
  }
  if (dropout != 0.1 && dropout != 0.2) logger()->warn("dropout {} is outside the default grid {{0.1, 0.2}}", dropout);
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"dropout", dropout}, {"max_epochs", max_epochs},
          {"patience", patience},           {"batch_size", batch_size}, {"seed", seed},
          {"beta1", beta1},                 {"beta2", beta2},     {"eps", eps},
          {"clip_norm", clip_norm},         {"max_steps", max_steps}, {"bucket_batches", bucket_batches}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be an object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
      else if (key == "patience") c.patience = value.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "eps") c.eps = value.get<double>();
      else if (key == "clip_norm") c.clip_norm = value.get<double>();
      else if (key == "max_steps") c.max_steps = value.get<std::size_t>();
      else if (key == "bucket_batches") c.bucket_batches = value.get<std::size_t>();
      else throw ConfigError("unknown train config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid train config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

template <typename T>
void clip_gradients(std::vector<ag::Parameter<T>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (std::size_t k = 0; k < p.grad.size(); ++k) sq += static_cast<double>(p.grad[k]) * p.grad[k];
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericalError("gradient norm is not finite");
  if (norm <= max_norm) return;
  const T factor = static_cast<T>(max_norm / norm);
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] *= factor;
  }
}

std::string history_text(const std::deque<double>& losses) {
  std::ostringstream s;
  for (std::size_t i = 0; i < losses.size(); ++i) s << (i ? ", " : "") << losses[i];
  return s.str();
}

}  // namespace

template <typename T>
TrainResult<T> train(model::LoReKTModel<T> model, std::span<const TrainDataset> datasets, const TrainConfig& config,
                     const importance::ImportanceProfile* profile) {
  config.validate();
  if (datasets.empty()) throw DataError("training needs at least one dataset");
  std::vector<std::vector<std::size_t>> lengths;
  for (const auto& d : datasets) {
    if (d.train.empty()) throw DataError("dataset '" + d.spec.name + "' has no training segments");
    if (d.valid.empty()) throw DataError("dataset '" + d.spec.name + "' has no validation segments");
    if (!model.vocab().contains(d.spec.dataset_index)) {
      throw DataError("model vocabulary does not include dataset '" + d.spec.name + "'");
    }
    auto& l = lengths.emplace_back();
    for (const auto& s : d.train) l.push_back(s.size());
  }

  std::optional<importance::GradientModulator<T>> modulator;
  if (profile) modulator.emplace(model, *profile);

  model.set_dropout(config.dropout);
  model.zero_grad();
  Adam<T> adam(model.parameters(), {config.learning_rate, config.beta1, config.beta2, config.eps});
  EarlyStopping stopper(config.patience);
  Rng dropout_rng(derive_seed(config.seed, "train/dropout"));

  TrainResult<T> result{model, 0, 0.0, 0, 0, {}};
  std::deque<double> recent;
  bool step_limit = false;
  for (std::size_t epoch = 1; epoch <= config.max_epochs && !step_limit; ++epoch) {
    const auto plan = data::mix_batches(lengths, config.batch_size,
                                        derive_seed(config.seed, "train/batches/" + std::to_string(epoch)),
                                        config.bucket_batches);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t bi = 0; bi < plan.size(); ++bi) {
      const auto& ref = plan[bi];
      const auto& ds = datasets[ref.dataset];
      std::vector<data::StudentSequence> chosen;
      chosen.reserve(ref.segments.size());
      for (auto i : ref.segments) chosen.push_back(ds.train[i]);
      const auto batch = data::make_batch(std::span<const data::StudentSequence>(chosen), model.vocab(),
                                          ds.spec.dataset_index);
      double loss_value = 0.0;
      try {
        ag::Tape<T> tape;
        const auto out = model.forward(tape, batch, {.train = true, .rng = &dropout_rng, .gates = nullptr});
        const auto loss = ag::bce_loss(out.probs, out.targets, out.mask);
        loss_value = static_cast<double>(loss.value()[0]);
        if (!std::isfinite(loss_value)) throw NumericalError("loss is " + std::to_string(loss_value));
        model.zero_grad();
        tape.backward(loss);
        if (modulator) modulator->apply(model);
        if (config.clip_norm > 0) clip_gradients(model.parameters(), config.clip_norm);
        adam.step(model.parameters());
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(bi) + ", dataset '" + ds.spec.name + "', recent losses [" +
                             history_text(recent) + "])");
      }
      recent.push_back(loss_value);
      if (recent.size() > 10) recent.pop_front();
      loss_sum += loss_value;
      ++n_batches;
      if (config.max_steps && adam.steps() >= config.max_steps) {
        step_limit = true;
        break;
      }
    }

    double val = 0.0;
    for (const auto& d : datasets) val += eval::evaluate_split(model, d.valid, d.spec, "valid").auc;
    val /= static_cast<double>(datasets.size());
    const double mean_loss = n_batches ? loss_sum / static_cast<double>(n_batches) : 0.0;
    result.history.push_back({epoch, mean_loss, val, adam.steps()});
    result.epochs_run = epoch;
    if (stopper.update(epoch, val)) {
      result.model = model;
      result.best_epoch = epoch;
      result.best_val_auc = val;
    }
    logger()->info("epoch {} loss {:.5f} val_auc {:.5f} best {:.5f}@{}", epoch, mean_loss, val,
                   stopper.best_score(), stopper.best_epoch());
    if (stopper.should_stop()) break;
  }
  result.steps = adam.steps();
  result.model.zero_grad();
  return result;
}

template <typename T>
TrainResult<T> pretrain(model::LoReKTModel<T> model, std::span<const TrainDataset> datasets,
                        const TrainConfig& config) {
  return train(std::move(model), datasets, config, nullptr);
}

template <typename T>
TrainResult<T> finetune(model::LoReKTModel<T> model, const TrainDataset& dataset, const TrainConfig& config,
                        const importance::ImportanceProfile* profile) {
  return train(std::move(model), std::span<const TrainDataset>(&dataset, 1), config, profile);
}

template <typename T>
GridResult<T> grid_search(const model::LoReKTModel<T>& model, std::span<const TrainDataset> datasets,
                          const TrainConfig& base, std::span<const double> learning_rates,
                          std::span<const double> dropouts, const importance::ImportanceProfile* profile) {
  if (learning_rates.empty() || dropouts.empty()) throw ConfigError("grid search needs at least one value per axis");
  std::optional<GridResult<T>> best;
  std::vector<GridPoint> points;
  for (double lr : learning_rates) {
    for (double p : dropouts) {
      TrainConfig c = base;
      c.learning_rate = lr;
      c.dropout = p;
      auto r = train(model, datasets, c, profile);
      points.push_back({lr, p, r.best_val_auc});
      if (!best || r.best_val_auc > best->best.best_val_auc) best.emplace(GridResult<T>{std::move(r), c, {}});
    }
  }
  best->points = std::move(points);
  return std::move(*best);
}

#define LOREKT_INSTANTIATE_TRAIN(T)                                                                             \
  template TrainResult<T> train(model::LoReKTModel<T>, std::span<const TrainDataset>, const TrainConfig&,       \
                                const importance::ImportanceProfile*);                                          \
  template TrainResult<T> pretrain(model::LoReKTModel<T>, std::span<const TrainDataset>, const TrainConfig&);   \
  template TrainResult<T> finetune(model::LoReKTModel<T>, const TrainDataset&, const TrainConfig&,              \
                                   const importance::ImportanceProfile*);                                       \
  template GridResult<T> grid_search(const model::LoReKTModel<T>&, std::span<const TrainDataset>,               \
                                     const TrainConfig&, std::span<const double>, std::span<const double>,      \
                                     const importance::ImportanceProfile*);

LOREKT_INSTANTIATE_TRAIN(float)
LOREKT_INSTANTIATE_TRAIN(double)

}  // namespace lorekt::train
