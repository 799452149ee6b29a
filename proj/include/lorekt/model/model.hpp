#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lorekt/autograd/gate.hpp"
#include "lorekt/autograd/ops.hpp"
#include "lorekt/data/batching.hpp"
#include "lorekt/data/vocab.hpp"
#include "lorekt/model/config.hpp"

namespace lorekt::model {

// The three gated sublayers of a decoder block.
enum class SublayerKind { kAttention = 0, kIntermediate = 1, kOutput = 2 };

std::string_view to_string(SublayerKind kind);
SublayerKind parse_sublayer_kind(std::string_view name);

struct LayerId {
  std::size_t block = 0;
  SublayerKind kind = SublayerKind::kAttention;

  auto operator<=>(const LayerId&) const = default;
};

// Width of a sublayer's output features (= gate width).
std::size_t sublayer_width(const ModelConfig& config, SublayerKind kind);

// All-ones gates, one after each gated sublayer of every block.
template <typename T>
class GateSet {
 public:
  explicit GateSet(const ModelConfig& config);

  ag::GateParam<T>& gate(LayerId id);
  const ag::GateParam<T>& gate(LayerId id) const;
  const std::vector<LayerId>& layers() const { return layers_; }
  void reset();

 private:
  std::vector<LayerId> layers_;
  std::vector<ag::GateParam<T>> gates_;
};

template <typename T>
struct ForwardOptions {
  bool train = false;
  Rng* rng = nullptr;            // dropout source; required when train and dropout > 0
  GateSet<T>* gates = nullptr;   // attach virtual gates when set
};

// Row r = b * seq_len + j of `probs` predicts the response at step j + 1.
// `mask` is 1 where that step exists.
template <typename T>
struct ForwardOutput {
  ag::Var<T> probs;
  ag::Tensor<T> targets;
  ag::Tensor<T> mask;
};

// Indices into the parameter list.
struct BlockParams {
  std::size_t ln1_gain, ln1_bias;
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t ln2_gain, ln2_bias;
  std::size_t inter_w, inter_b;
  std::size_t out_w, out_b;
};

// Decoder-only knowledge-tracing transformer.
//
// Step j of a sequence is encoded as
//   question(q_j) + type(QUESTION) + mean_{c in KC(q_j)} [kc(c) + type(CONCEPT)]
//   + response(r_j) + dataset(d) + position(j)
// and passed through pre-norm causal decoder blocks. The final hidden state
// h_j plus the step j+1 query (question, KC and type embeddings, no response)
// feeds a d_model -> d_ff -> 1 head whose sigmoid is the probability that
// step j+1 is answered correctly.
template <typename T>
class LoReKTModel {
 public:
  static LoReKTModel build(const ModelConfig& config, const data::GlobalVocab& vocab, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const data::GlobalVocab& vocab() const { return vocab_; }

  std::vector<ag::Parameter<T>>& parameters() { return params_; }
  const std::vector<ag::Parameter<T>>& parameters() const { return params_; }
  std::size_t parameter_index(std::string_view name) const;
  ag::Parameter<T>& parameter(std::string_view name) { return params_[parameter_index(name)]; }
  const ag::Parameter<T>& parameter(std::string_view name) const { return params_[parameter_index(name)]; }
  std::size_t parameter_count() const;

  const BlockParams& block(std::size_t i) const { return blocks_.at(i); }
  // Parameters whose output rows belong to a gated sublayer.
  std::vector<std::size_t> sublayer_parameters(LayerId id) const;

  ag::Var<T> encode(ag::Tape<T>& tape, const data::Batch& batch);
  // Decoder stack and prediction head on an encoded batch.
  ForwardOutput<T> decode(ag::Tape<T>& tape, const ag::Var<T>& encoded, const data::Batch& batch,
                          const ForwardOptions<T>& options = {});
  ForwardOutput<T> forward(ag::Tape<T>& tape, const data::Batch& batch, const ForwardOptions<T>& options = {});

  // Eval-mode probabilities, one per row of the batch.
  std::vector<T> predict(const data::Batch& batch);

  // Extends the vocabulary with an unseen dataset. New question/KC rows start
  // at the mean of the existing rows plus Normal(0, noise_std) noise; the new
  // dataset row is the mean of the existing dataset rows. Everything else is
  // copied unchanged.
  LoReKTModel zero_shot_adapt(const data::DatasetSpec& spec, data::VocabSize size, std::uint64_t seed,
                              double noise_std = 0.01) const;

  void zero_grad();
  void set_requires_grad(bool value);
  void set_dropout(double p);

  template <typename U>
  LoReKTModel<U> cast() const;

 private:
  template <typename>
  friend class LoReKTModel;

  LoReKTModel() = default;
  std::size_t add_param(std::string name, ag::Shape shape);
  void layout();
  ag::Var<T> query(ag::Tape<T>& tape, const data::Batch& batch);

  ModelConfig config_;
  data::GlobalVocab vocab_;
  std::vector<ag::Parameter<T>> params_;
  std::vector<BlockParams> blocks_;
  std::size_t question_, kc_, response_, type_, dataset_, position_;
  std::size_t final_gain_, final_bias_;
  std::size_t head_w1_, head_b1_, head_w2_, head_b2_;
};

template <typename T>
template <typename U>
LoReKTModel<U> LoReKTModel<T>::cast() const {
  LoReKTModel<U> out;
  out.config_ = config_;
  out.vocab_ = vocab_;
  out.layout();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = params_[i].value;
    auto& dst = out.params_[i].value;
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<U>(src[k]);
  }
  return out;
}

}  // namespace lorekt::model
