#pragma once

#include <cstdint>
#include <vector>

#include "lorekt/autograd/tape.hpp"
#include "lorekt/common/random.hpp"

namespace lorekt::ag {

using lorekt::Rng;

// CSR list of table rows per output row. Each output row is the mean of its
// listed table rows (a single row gives a plain lookup; an empty list gives zeros).
struct EmbeddingIndex {
  std::vector<std::uint32_t> offsets{0};
  std::vector<std::uint32_t> rows;

  std::size_t size() const { return offsets.size() - 1; }
  void push(std::initializer_list<std::uint32_t> ids);
  template <typename It>
  void push(It first, It last) {
    rows.insert(rows.end(), first, last);
    offsets.push_back(static_cast<std::uint32_t>(rows.size()));
  }
  static EmbeddingIndex single(const std::vector<std::uint32_t>& ids);
};

struct AttentionShape {
  std::size_t batch = 1;
  std::size_t seq_len = 1;
  std::size_t n_head = 1;
};

// Same shape, or b holding a single row ([n] or [1, n]) broadcast along the rows of a.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);

// a: [..., k]; b: [k, n] (or [n, k] when transpose_b). Result [..., n].
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_b = false);

// table: [V, d]. Result [index.size(), d].
template <typename T>
Var<T> embedding_lookup(const Var<T>& table, const EmbeddingIndex& index);

// Along the last axis.
template <typename T>
Var<T> softmax(const Var<T>& x);

// Normalisation only (no affine terms), per row of the last axis. A constant
// row maps to exactly zero.
template <typename T>
Var<T> layer_norm(const Var<T>& x, double eps = 1e-5);

// Inverted dropout; identity when !train or p == 0.
template <typename T>
Var<T> dropout(const Var<T>& x, double p, Rng& rng, bool train);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

// tanh approximation.
template <typename T>
Var<T> gelu(const Var<T>& x);

// q, k, v: [batch * seq_len, d_model] with heads laid out contiguously along
// the feature axis. Position j attends to positions <= j within its sequence.
template <typename T>
Var<T> causal_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, AttentionShape shape);

// Rank-2 inputs; axis 0 stacks rows, axis 1 joins columns.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& inputs, std::size_t axis);

// Removes `axis`; reducing a rank-1 tensor gives shape {1}.
template <typename T>
Var<T> mean(const Var<T>& x, std::size_t axis);

template <typename T>
Var<T> sum(const Var<T>& x);

// Masked mean binary cross-entropy with probabilities clamped to [clamp, 1 - clamp].
template <typename T>
Var<T> bce_loss(const Var<T>& probs, const Tensor<T>& targets, const Tensor<T>& mask, double clamp = 1e-7);

}  // namespace lorekt::ag
