#include "lorekt/autograd/gate.hpp"

#include <algorithm>

#include "lorekt/common/error.hpp"

namespace lorekt::ag {

template <typename T>
GateParam<T>::GateParam(std::string name, std::size_t width)
    : param_(std::move(name), Tensor<T>({width}, T(1))), zeros_({width}) {}

template <typename T>
std::span<const T> GateParam<T>::captured_grad() const {
  return param_.has_grad() ? param_.grad.span() : zeros_.span();
}

template <typename T>
void GateParam<T>::reset() {
  param_.ensure_grad().fill(T(0));
}

template <typename T>
Var<T> gate_apply(const Var<T>& layer_output, GateParam<T>& gate) {
  if (!layer_output.valid()) throw Error("gate_apply: unbound layer output");
  if (layer_output.value().cols() != gate.width()) {
    throw ShapeError("gate_apply: gate '" + gate.name() + "' has width " + std::to_string(gate.width()) +
                     " but layer output has shape " + to_string(layer_output.shape()));
  }
  const auto v = gate.values();
  if (!std::all_of(v.begin(), v.end(), [](T x) { return x == T(1); })) {
    throw Error("gate_apply: gate '" + gate.name() + "' values must all be 1");
  }
  return mul(layer_output, layer_output.tape()->parameter(gate.parameter()));
}

template class GateParam<float>;
template class GateParam<double>;
template Var<float> gate_apply(const Var<float>&, GateParam<float>&);
template Var<double> gate_apply(const Var<double>&, GateParam<double>&);

}  // namespace lorekt::ag
