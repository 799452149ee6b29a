#include "lorekt/model/model.hpp"

#include "lorekt/common/error.hpp"
#include "lorekt/common/random.hpp"

namespace lorekt::model {

using ag::Parameter;
using ag::Tape;
using ag::Tensor;
using ag::Var;

std::string_view to_string(SublayerKind kind) {
  switch (kind) {
    case SublayerKind::kAttention: return "attention";
    case SublayerKind::kIntermediate: return "intermediate";
    case SublayerKind::kOutput: return "output";
  }
  return "?";
}

SublayerKind parse_sublayer_kind(std::string_view name) {
  if (name == "attention") return SublayerKind::kAttention;
  if (name == "intermediate") return SublayerKind::kIntermediate;
  if (name == "output") return SublayerKind::kOutput;
  throw DataError("unknown sublayer kind '" + std::string(name) + "'");
}

std::size_t sublayer_width(const ModelConfig& config, SublayerKind kind) {
  return kind == SublayerKind::kIntermediate ? config.d_ff : config.d_model;
}

template <typename T>
GateSet<T>::GateSet(const ModelConfig& config) {
  for (std::size_t b = 0; b < config.n_layers; ++b) {
    for (auto kind : {SublayerKind::kAttention, SublayerKind::kIntermediate, SublayerKind::kOutput}) {
      layers_.push_back({b, kind});
      gates_.emplace_back("gate.block" + std::to_string(b) + "." + std::string(to_string(kind)),
                          sublayer_width(config, kind));
    }
  }
}

template <typename T>
ag::GateParam<T>& GateSet<T>::gate(LayerId id) {
  const std::size_t i = id.block * 3 + static_cast<std::size_t>(id.kind);
  if (i >= gates_.size()) throw Error("gate: block " + std::to_string(id.block) + " out of range");
  return gates_[i];
}

template <typename T>
const ag::GateParam<T>& GateSet<T>::gate(LayerId id) const {
  return const_cast<GateSet*>(this)->gate(id);
}

template <typename T>
void GateSet<T>::reset() {
  for (auto& g : gates_) g.reset();
}

template <typename T>
std::size_t LoReKTModel<T>::add_param(std::string name, ag::Shape shape) {
  params_.emplace_back(std::move(name), Tensor<T>(std::move(shape)));
  return params_.size() - 1;
}

template <typename T>
void LoReKTModel<T>::layout() {
  const ModelConfig& c = config_;
  const std::size_t d = c.d_model, f = c.d_ff;
  params_.clear();
  blocks_.clear();
  params_.reserve(6 + c.n_layers * 16 + 6);

  question_ = add_param("emb.question", {c.n_questions, d});
  kc_ = add_param("emb.kc", {c.n_kcs, d});
  response_ = add_param("emb.response", {2, d});
  type_ = add_param("emb.type", {2, d});
  dataset_ = add_param("emb.dataset", {c.n_datasets, d});
  position_ = add_param("emb.position", {c.max_seq_len, d});

  for (std::size_t b = 0; b < c.n_layers; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    BlockParams bp{};
    bp.ln1_gain = add_param(p + "ln1.gain", {d});
    bp.ln1_bias = add_param(p + "ln1.bias", {d});
    bp.wq = add_param(p + "attn.wq", {d, d});
    bp.bq = add_param(p + "attn.bq", {d});
    bp.wk = add_param(p + "attn.wk", {d, d});
    bp.bk = add_param(p + "attn.bk", {d});
    bp.wv = add_param(p + "attn.wv", {d, d});
    bp.bv = add_param(p + "attn.bv", {d});
    bp.wo = add_param(p + "attn.wo", {d, d});
    bp.bo = add_param(p + "attn.bo", {d});
    bp.ln2_gain = add_param(p + "ln2.gain", {d});
    bp.ln2_bias = add_param(p + "ln2.bias", {d});
    bp.inter_w = add_param(p + "inter.w", {f, d});
    bp.inter_b = add_param(p + "inter.b", {f});
    bp.out_w = add_param(p + "out.w", {d, f});
    bp.out_b = add_param(p + "out.b", {d});
    blocks_.push_back(bp);
  }

  final_gain_ = add_param("final_ln.gain", {d});
  final_bias_ = add_param("final_ln.bias", {d});
  head_w1_ = add_param("head.w1", {f, d});
  head_b1_ = add_param("head.b1", {f});
  head_w2_ = add_param("head.w2", {1, f});
  head_b2_ = add_param("head.b2", {1});
}

template <typename T>
LoReKTModel<T> LoReKTModel<T>::build(const ModelConfig& config, const data::GlobalVocab& vocab, std::uint64_t seed) {
  config.validate();
  if (config.n_questions != vocab.question_table_rows() || config.n_kcs != vocab.kc_table_rows() ||
      config.n_datasets != vocab.dataset_table_rows()) {
    throw ConfigError("model: embedding table sizes do not match the vocabulary");
  }
  LoReKTModel m;
  m.config_ = config;
  m.vocab_ = vocab;
  m.layout();

  Rng rng(seed);
  for (auto& p : m.params_) {
    const std::string& n = p.name;
    const bool is_gain = n.ends_with(".gain");
    const bool is_bias = n.ends_with(".bias") || n.ends_with(".bq") || n.ends_with(".bk") || n.ends_with(".bv") ||
                         n.ends_with(".bo") || n.ends_with(".b") || n.ends_with(".b1") || n.ends_with(".b2");
    if (is_gain) {
      p.value.fill(T(1));
    } else if (!is_bias) {
      for (auto& v : p.value.storage()) v = static_cast<T>(normal(rng, 0.0, 0.02));
    }
  }
  return m;
}

template <typename T>
std::size_t LoReKTModel<T>::parameter_index(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw Error("model has no parameter named '" + std::string(name) + "'");
}

template <typename T>
std::size_t LoReKTModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
std::vector<std::size_t> LoReKTModel<T>::sublayer_parameters(LayerId id) const {
  const BlockParams& b = blocks_.at(id.block);
  switch (id.kind) {
    case SublayerKind::kAttention: return {b.wq, b.bq, b.wk, b.bk, b.wv, b.bv, b.wo, b.bo};
    case SublayerKind::kIntermediate: return {b.inter_w, b.inter_b};
    case SublayerKind::kOutput: return {b.out_w, b.out_b};
  }
  return {};
}

namespace {

template <typename T>
Var<T> linear(Tape<T>& tape, const Var<T>& x, Parameter<T>& w, Parameter<T>& b) {
  return ag::add(ag::matmul(x, tape.parameter(w), /*transpose_b=*/true), tape.parameter(b));
}

template <typename T>
Var<T> norm(Tape<T>& tape, const Var<T>& x, Parameter<T>& gain, Parameter<T>& bias) {
  return ag::add(ag::mul(ag::layer_norm(x), tape.parameter(gain)), tape.parameter(bias));
}

}  // namespace

template <typename T>
Var<T> LoReKTModel<T>::encode(Tape<T>& tape, const data::Batch& batch) {
  const std::size_t B = batch.batch_size, L = batch.seq_len;
  if (L > config_.max_seq_len) {
    throw DataError("encode: sequence length " + std::to_string(L) + " exceeds max_seq_len " +
                    std::to_string(config_.max_seq_len));
  }
  if (batch.dataset_index >= config_.n_datasets) {
    throw DataError("encode: dataset index " + std::to_string(batch.dataset_index) + " has no embedding row");
  }
  std::vector<std::uint32_t> positions(B * L), responses(B * L);
  for (std::size_t r = 0; r < B * L; ++r) {
    positions[r] = static_cast<std::uint32_t>(r % L);
    responses[r] = batch.responses[r];
  }

  Var<T> type = tape.parameter(params_[type_]);
  Var<T> x = ag::embedding_lookup(tape.parameter(params_[question_]), ag::EmbeddingIndex::single(batch.question_rows));
  x = ag::add(x, ag::embedding_lookup(type, ag::EmbeddingIndex::single({0})));
  x = ag::add(x, ag::embedding_lookup(tape.parameter(params_[kc_]), batch.kc_rows));
  x = ag::add(x, ag::embedding_lookup(type, ag::EmbeddingIndex::single({1})));
  x = ag::add(x, ag::embedding_lookup(tape.parameter(params_[response_]), ag::EmbeddingIndex::single(responses)));
  x = ag::add(x,
              ag::embedding_lookup(tape.parameter(params_[dataset_]), ag::EmbeddingIndex::single({batch.dataset_index})));
  x = ag::add(x, ag::embedding_lookup(tape.parameter(params_[position_]), ag::EmbeddingIndex::single(positions)));
  return x;
}

template <typename T>
Var<T> LoReKTModel<T>::query(Tape<T>& tape, const data::Batch& batch) {
  const std::size_t B = batch.batch_size, L = batch.seq_len;
  ag::EmbeddingIndex questions, kcs;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < L; ++j) {
      const std::size_t next = b * L + j + 1;
      if (j + 1 < L && batch.valid[next]) {
        questions.push({batch.question_rows[next]});
        const auto begin = batch.kc_rows.offsets[next], end = batch.kc_rows.offsets[next + 1];
        kcs.push(batch.kc_rows.rows.begin() + begin, batch.kc_rows.rows.begin() + end);
      } else {
        questions.push({});
        kcs.push({});
      }
    }
  }
  Var<T> type = tape.parameter(params_[type_]);
  Var<T> q = ag::embedding_lookup(tape.parameter(params_[question_]), questions);
  q = ag::add(q, ag::embedding_lookup(type, ag::EmbeddingIndex::single({0})));
  q = ag::add(q, ag::embedding_lookup(tape.parameter(params_[kc_]), kcs));
  q = ag::add(q, ag::embedding_lookup(type, ag::EmbeddingIndex::single({1})));
  return q;
}

template <typename T>
ForwardOutput<T> LoReKTModel<T>::decode(Tape<T>& tape, const Var<T>& encoded, const data::Batch& batch,
                                        const ForwardOptions<T>& options) {
  const std::size_t B = batch.batch_size, L = batch.seq_len;
  const double p = options.train ? config_.dropout : 0.0;
  if (p > 0.0 && options.rng == nullptr) throw Error("forward: training with dropout needs a generator");
  Rng unused(0);
  Rng& rng = options.rng ? *options.rng : unused;
  auto gated = [&](const Var<T>& v, std::size_t block, SublayerKind kind) {
    return options.gates ? ag::gate_apply(v, options.gates->gate({block, kind})) : v;
  };

  Var<T> x = ag::dropout(encoded, p, rng, options.train);
  const ag::AttentionShape shape{B, L, config_.n_head};
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const BlockParams& bp = blocks_[i];
    Var<T> h = norm(tape, x, params_[bp.ln1_gain], params_[bp.ln1_bias]);
    Var<T> q = linear(tape, h, params_[bp.wq], params_[bp.bq]);
    Var<T> k = linear(tape, h, params_[bp.wk], params_[bp.bk]);
    Var<T> v = linear(tape, h, params_[bp.wv], params_[bp.bv]);
    Var<T> attn = linear(tape, ag::causal_attention(q, k, v, shape), params_[bp.wo], params_[bp.bo]);
    attn = gated(attn, i, SublayerKind::kAttention);
    x = ag::add(x, ag::dropout(attn, p, rng, options.train));

    Var<T> h2 = norm(tape, x, params_[bp.ln2_gain], params_[bp.ln2_bias]);
    Var<T> inter = ag::gelu(linear(tape, h2, params_[bp.inter_w], params_[bp.inter_b]));
    inter = gated(inter, i, SublayerKind::kIntermediate);
    Var<T> out = linear(tape, inter, params_[bp.out_w], params_[bp.out_b]);
    out = gated(out, i, SublayerKind::kOutput);
    x = ag::add(x, ag::dropout(out, p, rng, options.train));
  }
  Var<T> hidden = norm(tape, x, params_[final_gain_], params_[final_bias_]);
  Var<T> z = ag::add(hidden, query(tape, batch));
  Var<T> u = ag::gelu(linear(tape, z, params_[head_w1_], params_[head_b1_]));
  Var<T> logits = linear(tape, u, params_[head_w2_], params_[head_b2_]);

  ForwardOutput<T> out;
  out.probs = ag::sigmoid(logits);
  out.targets = Tensor<T>({B * L, 1});
  out.mask = Tensor<T>({B * L, 1});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j + 1 < L; ++j) {
      const std::size_t r = b * L + j;
      if (!batch.valid[r + 1]) continue;
      out.mask[r] = T(1);
      out.targets[r] = static_cast<T>(batch.responses[r + 1]);
    }
  }
  return out;
}

template <typename T>
ForwardOutput<T> LoReKTModel<T>::forward(Tape<T>& tape, const data::Batch& batch, const ForwardOptions<T>& options) {
  return decode(tape, encode(tape, batch), batch, options);
}

template <typename T>
std::vector<T> LoReKTModel<T>::predict(const data::Batch& batch) {
  Tape<T> tape(/*track_gradients=*/false);
  const auto out = forward(tape, batch);
  const auto& probs = out.probs.value().storage();
  return {probs.begin(), probs.end()};
}

template <typename T>
LoReKTModel<T> LoReKTModel<T>::zero_shot_adapt(const data::DatasetSpec& spec, data::VocabSize size,
                                               std::uint64_t seed, double noise_std) const {
  LoReKTModel out;
  out.vocab_ = vocab_.extend(spec, size);
  out.config_ = config_.with_vocab(out.vocab_);
  out.layout();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (i == question_ || i == kc_ || i == dataset_) continue;
    out.params_[i].value = params_[i].value;
  }

  Rng rng(seed);
  const std::size_t d = config_.d_model;
  // Known rows keep their index, UNK rows shift past the new range, and the new
  // range plus its UNK row are initialised around the mean of known rows.
  auto extend_table = [&](const Tensor<T>& old_table, Tensor<T>& new_table, std::size_t old_known,
                          std::size_t new_known, std::size_t old_unk) {
    std::vector<double> mean(d, 0.0);
    for (std::size_t r = 0; r < old_known; ++r) {
      for (std::size_t c = 0; c < d; ++c) mean[c] += old_table.at(r, c);
    }
    for (auto& m : mean) m /= static_cast<double>(std::max<std::size_t>(old_known, 1));
    for (std::size_t r = 0; r < old_known; ++r) {
      for (std::size_t c = 0; c < d; ++c) new_table.at(r, c) = old_table.at(r, c);
    }
    for (std::size_t u = 0; u < old_unk; ++u) {
      for (std::size_t c = 0; c < d; ++c) new_table.at(new_known + u, c) = old_table.at(old_known + u, c);
    }
    auto init_row = [&](std::size_t r) {
      for (std::size_t c = 0; c < d; ++c) {
        const double noise = noise_std > 0 ? normal(rng, 0.0, noise_std) : 0.0;
        new_table.at(r, c) = static_cast<T>(mean[c] + noise);
      }
    };
    for (std::size_t r = old_known; r < new_known; ++r) init_row(r);
    init_row(new_known + old_unk);
  };

  const std::size_t n_old = vocab_.entries().size();
  extend_table(params_[question_].value, out.params_[out.question_].value, vocab_.total_questions(),
               out.vocab_.total_questions(), n_old);
  extend_table(params_[kc_].value, out.params_[out.kc_].value, vocab_.total_kcs(), out.vocab_.total_kcs(), n_old);

  const Tensor<T>& old_ds = params_[dataset_].value;
  Tensor<T>& new_ds = out.params_[out.dataset_].value;
  std::vector<double> ds_mean(d, 0.0);
  for (const auto& e : vocab_.entries()) {
    for (std::size_t c = 0; c < d; ++c) ds_mean[c] += old_ds.at(e.dataset_index, c);
  }
  for (auto& m : ds_mean) m /= static_cast<double>(std::max<std::size_t>(n_old, 1));
  for (std::size_t r = 0; r < new_ds.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      new_ds.at(r, c) = r < old_ds.rows() ? old_ds.at(r, c) : static_cast<T>(ds_mean[c]);
    }
  }
  return out;
}

template <typename T>
void LoReKTModel<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
void LoReKTModel<T>::set_requires_grad(bool value) {
  for (auto& p : params_) p.requires_grad = value;
}

template <typename T>
void LoReKTModel<T>::set_dropout(double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  config_.dropout = p;
}

template class GateSet<float>;
template class GateSet<double>;
template class LoReKTModel<float>;
template class LoReKTModel<double>;

}  // namespace lorekt::model
