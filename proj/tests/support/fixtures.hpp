#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lorekt/common/random.hpp"
#include "lorekt/data/batching.hpp"
#include "lorekt/data/types.hpp"
#include "lorekt/data/vocab.hpp"
#include "lorekt/model/model.hpp"

namespace lorekt::testing {

inline data::Interaction step(std::uint32_t q, std::vector<std::uint32_t> kcs, std::uint8_t r, std::uint64_t t = 0) {
  return {q, std::move(kcs), r, t};
}

inline data::StudentSequence sequence(std::string id, std::vector<data::Interaction> steps) {
  return {std::move(id), std::move(steps)};
}

// Dataset "A" (index 0): 5 questions, 3 KCs. Dataset "B" (index 1): 4 questions, 2 KCs.
inline data::DatasetSpec spec_a() { return {"A", 0, ""}; }
inline data::DatasetSpec spec_b() { return {"B", 1, ""}; }

inline data::GlobalVocab fixture_vocab() {
  return data::GlobalVocab::build({spec_a(), spec_b()}, {{5, 3}, {4, 2}});
}

// Hand-made sequences for dataset A, including a multi-KC question.
inline std::vector<data::StudentSequence> fixture_sequences() {
  return {sequence("s1", {step(0, {0}, 1), step(3, {1, 2}, 0), step(1, {0}, 1), step(4, {2}, 1), step(2, {1}, 0)}),
          sequence("s2", {step(2, {1}, 1), step(2, {1}, 1), step(0, {0}, 0)}),
          sequence("s3", {step(4, {2}, 0), step(1, {0}, 1), step(3, {1, 2}, 1), step(0, {0}, 1)})};
}

inline model::ModelConfig fixture_config(std::size_t n_layers, std::size_t d_model, std::size_t n_head,
                                         std::size_t d_ff, const data::GlobalVocab& vocab,
                                         std::size_t max_seq_len = 8) {
  model::ModelConfig c;
  c.n_layers = n_layers;
  c.d_model = d_model;
  c.n_head = n_head;
  c.d_ff = d_ff;
  c.dropout = 0.0;
  c.max_seq_len = max_seq_len;
  return c.with_vocab(vocab);
}

// Model with every parameter redrawn at a scale where gradients are far from
// round-off: weights N(0, weight_std), gains 1 + N(0, 0.1).
template <typename T>
model::LoReKTModel<T> fixture_model(const model::ModelConfig& config, const data::GlobalVocab& vocab,
                                    std::uint64_t seed, double weight_std = 0.3) {
  auto m = model::LoReKTModel<T>::build(config, vocab, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& p : m.parameters()) {
    const bool gain = p.name.ends_with(".gain");
    for (auto& v : p.value.storage()) v = static_cast<T>(gain ? 1.0 + normal(rng, 0.0, 0.1) : normal(rng, 0.0, weight_std));
  }
  return m;
}

}  // namespace lorekt::testing
