#include "lorekt/train/early_stopping.hpp"

#include "lorekt/common/error.hpp"

namespace lorekt::train {

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw ConfigError("early stopping patience must be at least 1");
}

bool EarlyStopping::update(std::size_t epoch, double score) {
  if (score > best_) {
    best_ = score;
    best_epoch_ = epoch;
    since_best_ = 0;
    has_best_ = true;
    return true;
  }
  ++since_best_;
  return false;
}

}  // namespace lorekt::train
