#include "lorekt/autograd/tape.hpp"

#include "lorekt/common/error.hpp"

namespace lorekt::ag {

template <typename T>
Tensor<T>& Parameter<T>::ensure_grad() {
  if (grad.empty()) grad = Tensor<T>(value.shape());
  return grad;
}

template <typename T>
void Parameter<T>::zero_grad() {
  if (!grad.empty()) grad.fill(T(0));
}

template <typename T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  Node n;
  n.param = &p;
  n.requires_grad = track_ && p.requires_grad;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const auto& in : inputs) {
    if (in.tape() != this) throw Error("op input belongs to a different tape");
    n.requires_grad = n.requires_grad || requires_grad(in.id());
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
  return record(std::move(value), std::vector<Var<T>>(inputs), std::move(fn));
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.param ? n.param->value : n.value;
}

template <typename T>
Tensor<T>& Tape<T>::grad(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.param) return n.param->ensure_grad();
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss.tape() != this) throw Error("backward: loss was not recorded on this tape");
  const Node& root = nodes_.at(loss.id());
  if (value(loss.id()).size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(value(loss.id()).shape()));
  }
  if (!root.requires_grad) throw Error("backward: loss is detached from every parameter");

  for (auto& n : nodes_) {
    if (!n.param) n.grad = Tensor<T>();
  }
  grad(loss.id())[0] += T(1);

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.value, n.grad);
  }
}

template struct Parameter<float>;
template struct Parameter<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace lorekt::ag
