#pragma once

#include <vector>

#include "lorekt/autograd/tape.hpp"

namespace lorekt::train {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction and a constant learning rate. Parameters without
// a gradient buffer, or with requires_grad off, are skipped.
template <typename T>
class Adam {
 public:
  Adam(const std::vector<ag::Parameter<T>>& params, AdamConfig config);

  void step(std::vector<ag::Parameter<T>>& params);
  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace lorekt::train
