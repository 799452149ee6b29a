#include "lorekt/train/adam.hpp"

#include <cmath>

#include "lorekt/common/error.hpp"

namespace lorekt::train {

template <typename T>
Adam<T>::Adam(const std::vector<ag::Parameter<T>>& params, AdamConfig config) : config_(config) {
  if (!(config.learning_rate > 0) || !(config.beta1 >= 0 && config.beta1 < 1) ||
      !(config.beta2 >= 0 && config.beta2 < 1) || !(config.eps > 0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  m_.resize(params.size());
  v_.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i].assign(params[i].value.size(), T(0));
    v_[i].assign(params[i].value.size(), T(0));
  }
}

template <typename T>
void Adam<T>::step(std::vector<ag::Parameter<T>>& params) {
  if (params.size() != m_.size()) throw ShapeError("Adam: parameter list changed size");
  ++t_;
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(config_.beta1, static_cast<double>(t_)));
  const T c2 = static_cast<T>(1.0 - std::pow(config_.beta2, static_cast<double>(t_)));
  const T lr = static_cast<T>(config_.learning_rate);
  const T eps = static_cast<T>(config_.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.requires_grad || !p.has_grad()) continue;
    T* w = p.value.data();
    const T* g = p.grad.data();
    T* m = m_[i].data();
    T* v = v_[i].data();
    for (std::size_t k = 0; k < m_[i].size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      const T m_hat = m[k] / c1;
      const T v_hat = v[k] / c2;
      w[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace lorekt::train
