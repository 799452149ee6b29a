#pragma once

#include <span>
#include <string>

#include "lorekt/autograd/ops.hpp"

namespace lorekt::ag {

// All-ones multiplicative gate on a layer output. It never changes the forward
// value; its gradient is read off after backward and never applied.
template <typename T>
class GateParam {
 public:
  GateParam(std::string name, std::size_t width);

  std::size_t width() const { return param_.value.size(); }
  const std::string& name() const { return param_.name; }
  std::span<const T> values() const { return param_.value.span(); }
  // Zeros until a backward pass has reached the gate.
  std::span<const T> captured_grad() const;
  void reset();

  Parameter<T>& parameter() { return param_; }

 private:
  Parameter<T> param_;
  Tensor<T> zeros_;
};

// ô = g ⊙ o with g broadcast along the rows of o.
template <typename T>
Var<T> gate_apply(const Var<T>& layer_output, GateParam<T>& gate);

}  // namespace lorekt::ag
