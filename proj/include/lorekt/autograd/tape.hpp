#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "lorekt/autograd/tensor.hpp"

namespace lorekt::ag {

// A trainable array. The gradient buffer is allocated on first use and
// accumulates across backward passes until zero_grad().
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)) {}

  Tensor<T>& ensure_grad();
  void zero_grad();
  bool has_grad() const { return !grad.empty(); }
};

template <typename T>
class Tape;

// Handle to a node recorded on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Linear record of executed ops. Node ids are assigned in execution order,
// so reverse id order is a valid reverse topological order.
template <typename T>
class Tape {
 public:
  // Called once during backward with the node's output and the gradient
  // flowing into it.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& out, const Tensor<T>& grad_out)>;

  // With tracking off, parameter leaves never require grad and no backward
  // closures are kept (inference).
  explicit Tape(bool track_gradients = true) : track_(track_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  // Leaf bound to a parameter; gradients accumulate into p.grad.
  Var<T> parameter(Parameter<T>& p);
  // Records an op output. The closure is dropped when no input requires grad.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn);
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn);

  const Tensor<T>& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  // Gradient accumulator for a node, zero-initialised on first access.
  Tensor<T>& grad(std::size_t id);
  // Gradient of a non-leaf node after backward (empty when none flowed).
  const Tensor<T>& grad_of(const Var<T>& v) const { return nodes_.at(v.id()).grad; }

  // Reverse pass from a scalar loss. Intermediate gradients are cleared first;
  // parameter gradients accumulate.
  void backward(const Var<T>& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var<T> push(Node node);

  std::deque<Node> nodes_;
  bool track_ = true;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

}  // namespace lorekt::ag
