#pragma once

#include <cstddef>
#include <limits>

namespace lorekt::train {

// Tracks the best validation score; stops after `patience` epochs without a
// strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  // Returns true when `score` is a new best. NaN never improves.
  bool update(std::size_t epoch, double score);
  bool should_stop() const { return since_best_ >= patience_; }

  double best_score() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epochs_since_best() const { return since_best_; }
  bool has_best() const { return has_best_; }

 private:
  std::size_t patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  bool has_best_ = false;
};

}  // namespace lorekt::train
