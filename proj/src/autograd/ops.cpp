#include "lorekt/autograd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "lorekt/common/error.hpp"

namespace lorekt::ag {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
MatMap<T> as_mat(Tensor<T>& t) {
  return MatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
ConstMatMap<T> as_mat(const Tensor<T>& t) {
  return ConstMatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

std::string mismatch(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b);
}

template <typename T>
void require_finite(const char* op, const Tensor<T>& t) {
  if (!t.all_finite()) throw NumericalError(std::string(op) + ": non-finite value in output");
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += s[i];
}

template <typename T>
Tape<T>& tape_of(const Var<T>& v) {
  if (!v.valid()) throw Error("op applied to an unbound Var");
  return *v.tape();
}

}  // namespace

void EmbeddingIndex::push(std::initializer_list<std::uint32_t> ids) { push(ids.begin(), ids.end()); }

EmbeddingIndex EmbeddingIndex::single(const std::vector<std::uint32_t>& ids) {
  EmbeddingIndex index;
  index.rows = ids;
  index.offsets.resize(ids.size() + 1);
  for (std::size_t i = 0; i <= ids.size(); ++i) index.offsets[i] = static_cast<std::uint32_t>(i);
  return index;
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const std::size_t ia = a.id(), ib = b.id();

  if (av.shape() == bv.shape()) {
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    require_finite("add", out);
    return tape.record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>&, const Tensor<T>& g) {
      if (t.requires_grad(ia)) accumulate(t.grad(ia), g);
      if (t.requires_grad(ib)) accumulate(t.grad(ib), g);
    });
  }
  if (bv.size() == av.cols() && bv.cols() == av.cols()) {
    Tensor<T> out(av.shape());
    as_mat(out) = as_mat(av).rowwise() + as_mat(bv).row(0);
    require_finite("add", out);
    return tape.record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>&, const Tensor<T>& g) {
      if (t.requires_grad(ia)) accumulate(t.grad(ia), g);
      if (t.requires_grad(ib)) as_mat(t.grad(ib)).row(0) += as_mat(g).colwise().sum();
    });
  }
  throw ShapeError(mismatch("add", av.shape(), bv.shape()));
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const std::size_t ia = a.id(), ib = b.id();

  if (av.shape() == bv.shape()) {
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    require_finite("mul", out);
    return tape.record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>&, const Tensor<T>& g) {
      const Tensor<T>& x = t.value(ia);
      const Tensor<T>& y = t.value(ib);
      if (t.requires_grad(ia)) {
        Tensor<T>& gx = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
      }
      if (t.requires_grad(ib)) {
        Tensor<T>& gy = t.grad(ib);
        for (std::size_t i = 0; i < g.size(); ++i) gy[i] += g[i] * x[i];
      }
    });
  }
  if (bv.size() == av.cols() && bv.cols() == av.cols()) {
    Tensor<T> out(av.shape());
    as_mat(out) = as_mat(av).array().rowwise() * as_mat(bv).row(0).array();
    require_finite("mul", out);
    return tape.record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>&, const Tensor<T>& g) {
      const Tensor<T>& x = t.value(ia);
      const Tensor<T>& y = t.value(ib);
      if (t.requires_grad(ia)) {
        as_mat(t.grad(ia)).array() += as_mat(g).array().rowwise() * as_mat(y).row(0).array();
      }
      if (t.requires_grad(ib)) {
        as_mat(t.grad(ib)).row(0) += (as_mat(g).array() * as_mat(x).array()).colwise().sum().matrix();
      }
    });
  }
  throw ShapeError(mismatch("mul", av.shape(), bv.shape()));
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  require_finite("scale", out);
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {a}, [ia, factor](Tape<T>& t, const Tensor<T>&, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_b) {
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (bv.rank() != 2) throw ShapeError(mismatch("matmul", av.shape(), bv.shape()));
  const std::size_t k = transpose_b ? bv.dim(1) : bv.dim(0);
  const std::size_t n = transpose_b ? bv.dim(0) : bv.dim(1);
  if (av.cols() != k) throw ShapeError(mismatch("matmul", av.shape(), bv.shape()));

  Shape out_shape = av.shape();
  out_shape.back() = n;
  Tensor<T> out(out_shape);
  if (transpose_b) {
    as_mat(out).noalias() = as_mat(av) * as_mat(bv).transpose();
  } else {
    as_mat(out).noalias() = as_mat(av) * as_mat(bv);
  }
  require_finite("matmul", out);

  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b},
                     [ia, ib, transpose_b](Tape<T>& t, const Tensor<T>&, const Tensor<T>& g) {
                       const Tensor<T>& x = t.value(ia);
                       const Tensor<T>& w = t.value(ib);
                       if (t.requires_grad(ia)) {
                         if (transpose_b) {
                           as_mat(t.grad(ia)).noalias() += as_mat(g) * as_mat(w);
                         } else {
                           as_mat(t.grad(ia)).noalias() += as_mat(g) * as_mat(w).transpose();
                         }
                       }
                       if (t.requires_grad(ib)) {
                         if (transpose_b) {
                           as_mat(t.grad(ib)).noalias() += as_mat(g).transpose() * as_mat(x);
                         } else {
                           as_mat(t.grad(ib)).noalias() += as_mat(x).transpose() * as_mat(g);
                         }
                       }
                     });
}

template <typename T>
Var<T> embedding_lookup(const Var<T>& table, const EmbeddingIndex& index) {
  Tape<T>& tape = tape_of(table);
  const Tensor<T>& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("embedding_lookup: table must be rank 2, got " + to_string(tv.shape()));
  if (index.offsets.empty() || index.offsets.back() != index.rows.size() || index.size() == 0) {
    throw ShapeError("embedding_lookup: malformed index");
  }
  const std::size_t d = tv.cols();
  const std::size_t n_rows = tv.rows();
  for (auto r : index.rows) {
    if (r >= n_rows) {
      throw ShapeError("embedding_lookup: row " + std::to_string(r) + " out of range for table " +
                       to_string(tv.shape()));
    }
  }

  Tensor<T> out({index.size(), d});
  for (std::size_t i = 0; i < index.size(); ++i) {
    const std::uint32_t begin = index.offsets[i], end = index.offsets[i + 1];
    if (begin == end) continue;
    T* dst = out.data() + i * d;
    for (std::uint32_t p = begin; p < end; ++p) {
      const T* src = tv.data() + static_cast<std::size_t>(index.rows[p]) * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
    if (end - begin > 1) {
      const T inv = T(1) / static_cast<T>(end - begin);
      for (std::size_t c = 0; c < d; ++c) dst[c] *= inv;
    }
  }
  require_finite("embedding_lookup", out);

  const std::size_t it = table.id();
  return tape.record(std::move(out), {table}, [it, index](Tape<T>& t, const Tensor<T>&, const Tensor<T>& g) {
    Tensor<T>& gt = t.grad(it);
    const std::size_t dd = g.cols();
    for (std::size_t i = 0; i < index.size(); ++i) {
      const std::uint32_t begin = index.offsets[i], end = index.offsets[i + 1];
      if (begin == end) continue;
      const T inv = end - begin > 1 ? T(1) / static_cast<T>(end - begin) : T(1);
      const T* src = g.data() + i * dd;
      for (std::uint32_t p = begin; p < end; ++p) {
        T* dst = gt.data() + static_cast<std::size_t>(index.rows[p]) * dd;
        for (std::size_t c = 0; c < dd; ++c) dst[c] += src[c] * inv;
      }
    }
  });
}

namespace {

template <typename T>
void softmax_rows(T* data, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = data + r * cols;
    const T m = *std::max_element(row, row + cols);
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - m);
      total += row[c];
    }
    const T inv = T(1) / total;
    for (std::size_t c = 0; c < cols; ++c) row[c] *= inv;
  }
}

}  // namespace

template <typename T>
Var<T> softmax(const Var<T>& x) {
  Tape<T>& tape = tape_of(x);
  Tensor<T> out = x.value();
  softmax_rows(out.data(), out.rows(), out.cols());
  require_finite("softmax", out);
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {x}, [ix](Tape<T>& t, const Tensor<T>& y, const Tensor<T>& g) {
    auto gy = as_mat(g).array();
    auto yy = as_mat(y).array();
    const auto dot = (gy * yy).rowwise().sum().eval();
    as_mat(t.grad(ix)).array() += yy * (gy.colwise() - dot);
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, double eps) {
  Tape<T>& tape = tape_of(x);
  const Tensor<T>& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor<T> out(xv.shape());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = xv.data() + r * cols;
    T* dst = out.data() + r * cols;
    const auto [lo, hi] = std::minmax_element(src, src + cols);
    if (*lo == *hi) {
      inv_std[r] = static_cast<T>(1.0 / std::sqrt(eps));
      continue;  // constant row normalises to zero
    }
    T mu = 0;
    for (std::size_t c = 0; c < cols; ++c) mu += src[c];
    mu /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (src[c] - mu) * (src[c] - mu);
    var /= static_cast<T>(cols);
    inv_std[r] = T(1) / std::sqrt(var + static_cast<T>(eps));
    for (std::size_t c = 0; c < cols; ++c) dst[c] = (src[c] - mu) * inv_std[r];
  }
  require_finite("layer_norm", out);

  const std::size_t ix = x.id();
  return tape.record(std::move(out), {x},
                     [ix, inv_std = std::move(inv_std)](Tape<T>& t, const Tensor<T>& y, const Tensor<T>& g) {
                       Tensor<T>& gx = t.grad(ix);
                       const std::size_t cc = y.cols();
                       const T inv_n = T(1) / static_cast<T>(cc);
                       for (std::size_t r = 0; r < y.rows(); ++r) {
                         const T* yr = y.data() + r * cc;
                         const T* gr = g.data() + r * cc;
                         T mean_g = 0, mean_gy = 0;
                         for (std::size_t c = 0; c < cc; ++c) {
                           mean_g += gr[c];
                           mean_gy += gr[c] * yr[c];
                         }
                         mean_g *= inv_n;
                         mean_gy *= inv_n;
                         T* dst = gx.data() + r * cc;
                         for (std::size_t c = 0; c < cc; ++c) {
                           dst[c] += inv_std[r] * (gr[c] - mean_g - yr[c] * mean_gy);
                         }
                       }
                     });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double p, Rng& rng, bool train) {
  if (p < 0.0 || p >= 1.0) throw Error("dropout: probability must lie in [0, 1)");
  if (!train || p == 0.0) return x;
  Tape<T>& tape = tape_of(x);
  const Tensor<T>& xv = x.value();
  Tensor<T> mask(xv.shape());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = uniform01(rng) >= p ? keep_scale : T(0);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {x},
                     [ix, mask = std::move(mask)](Tape<T>& t, const Tensor<T>&, const Tensor<T>& g) {
                       Tensor<T>& gx = t.grad(ix);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
                     });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tape<T>& tape = tape_of(x);
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-xv[i]));
  require_finite("sigmoid", out);
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {x}, [ix](Tape<T>& t, const Tensor<T>& y, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

template <typename T>
Var<T> gelu(const Var<T>& x) {
  Tape<T>& tape = tape_of(x);
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  const T c = static_cast<T>(kGeluC), a = static_cast<T>(kGeluA);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xv[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v)));
  }
  require_finite("gelu", out);
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {x}, [ix, c, a](Tape<T>& t, const Tensor<T>&, const Tensor<T>& g) {
    const Tensor<T>& xin = t.value(ix);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xin[i];
      const T th = std::tanh(c * (v + a * v * v * v));
      const T d = T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * c * (T(1) + T(3) * a * v * v);
      gx[i] += g[i] * d;
    }
  });
}

template <typename T>
Var<T> causal_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, AttentionShape shape) {
  Tape<T>& tape = tape_of(q);
  const Tensor<T>& qv = q.value();
  const Tensor<T>& kv = k.value();
  const Tensor<T>& vv = v.value();
  if (qv.shape() != kv.shape()) throw ShapeError(mismatch("causal_attention", qv.shape(), kv.shape()));
  if (qv.shape() != vv.shape()) throw ShapeError(mismatch("causal_attention", qv.shape(), vv.shape()));
  const std::size_t B = shape.batch, L = shape.seq_len, H = shape.n_head;
  const std::size_t D = qv.cols();
  if (qv.rank() != 2 || qv.rows() != B * L || H == 0 || D % H != 0) {
    throw ShapeError("causal_attention: input " + to_string(qv.shape()) + " incompatible with batch " +
                     std::to_string(B) + ", seq_len " + std::to_string(L) + ", heads " + std::to_string(H));
  }
  const std::size_t dh = D / H;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const auto Li = static_cast<Eigen::Index>(L), dhi = static_cast<Eigen::Index>(dh);
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(D));

  auto probs = std::make_shared<typename Tensor<T>::Storage>(B * H * L * L, T(0));
  Tensor<T> out(qv.shape());
  RowMat<T> scores(Li, Li);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = b * L * D + h * dh;
      ConstStridedMap<T> Q(qv.data() + off, Li, dhi, stride);
      ConstStridedMap<T> K(kv.data() + off, Li, dhi, stride);
      ConstStridedMap<T> V(vv.data() + off, Li, dhi, stride);
      scores.noalias() = (Q * K.transpose()) * scale;
      MatMap<T> P(probs->data() + (b * H + h) * L * L, Li, Li);
      for (std::size_t i = 0; i < L; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        T m = scores(ii, 0);
        for (Eigen::Index j = 1; j <= ii; ++j) m = std::max(m, scores(ii, j));
        T total = 0;
        for (Eigen::Index j = 0; j <= ii; ++j) {
          const T e = std::exp(scores(ii, j) - m);
          P(ii, j) = e;
          total += e;
        }
        const T inv = T(1) / total;
        for (Eigen::Index j = 0; j <= ii; ++j) P(ii, j) *= inv;
      }
      StridedMap<T> O(out.data() + off, Li, dhi, stride);
      O.noalias() = P * V;
    }
  }
  require_finite("causal_attention", out);

  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  return tape.record(
      std::move(out), {q, k, v},
      [iq, ik, iv, B, L, H, D, dh, scale, probs](Tape<T>& t, const Tensor<T>&, const Tensor<T>& g) {
        const Tensor<T>& qx = t.value(iq);
        const Tensor<T>& kx = t.value(ik);
        const Tensor<T>& vx = t.value(iv);
        const bool gq = t.requires_grad(iq), gk = t.requires_grad(ik), gv = t.requires_grad(iv);
        T* dq = gq ? t.grad(iq).data() : nullptr;
        T* dk = gk ? t.grad(ik).data() : nullptr;
        T* dv = gv ? t.grad(iv).data() : nullptr;
        const auto Li = static_cast<Eigen::Index>(L), dhi = static_cast<Eigen::Index>(dh);
        const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(D));
        RowMat<T> dP(Li, Li);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t h = 0; h < H; ++h) {
            const std::size_t off = b * L * D + h * dh;
            ConstStridedMap<T> Q(qx.data() + off, Li, dhi, stride);
            ConstStridedMap<T> K(kx.data() + off, Li, dhi, stride);
            ConstStridedMap<T> V(vx.data() + off, Li, dhi, stride);
            ConstStridedMap<T> dO(g.data() + off, Li, dhi, stride);
            ConstMatMap<T> P(probs->data() + (b * H + h) * L * L, Li, Li);
            if (gv) StridedMap<T>(dv + off, Li, dhi, stride).noalias() += P.transpose() * dO;
            if (!gq && !gk) continue;
            dP.noalias() = dO * V.transpose();
            const auto rowdot = (dP.array() * P.array()).rowwise().sum().eval();
            dP = (P.array() * (dP.array().colwise() - rowdot)).matrix() * scale;
            if (gq) StridedMap<T>(dq + off, Li, dhi, stride).noalias() += dP * K;
            if (gk) StridedMap<T>(dk + off, Li, dhi, stride).noalias() += dP.transpose() * Q;
          }
        }
      });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& inputs, std::size_t axis) {
  if (inputs.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  Tape<T>& tape = tape_of(inputs.front());
  const Shape& first = inputs.front().value().shape();
  if (first.size() != 2) throw ShapeError("concat: inputs must be rank 2, got " + to_string(first));
  std::size_t total = 0;
  for (const auto& in : inputs) {
    const Shape& s = in.value().shape();
    if (s.size() != 2 || s[1 - axis] != first[1 - axis]) throw ShapeError(mismatch("concat", first, s));
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  Tensor<T> out(out_shape);
  std::vector<std::size_t> ids, starts;
  std::size_t start = 0;
  for (const auto& in : inputs) {
    const Tensor<T>& iv = in.value();
    if (axis == 0) {
      std::copy(iv.data(), iv.data() + iv.size(), out.data() + start * out.cols());
    } else {
      for (std::size_t r = 0; r < iv.rows(); ++r) {
        std::copy(iv.data() + r * iv.cols(), iv.data() + (r + 1) * iv.cols(), out.data() + r * total + start);
      }
    }
    ids.push_back(in.id());
    starts.push_back(start);
    start += iv.shape()[axis];
  }
  return tape.record(std::move(out), inputs, [ids, starts, axis](Tape<T>& t, const Tensor<T>&, const Tensor<T>& g) {
    for (std::size_t n = 0; n < ids.size(); ++n) {
      if (!t.requires_grad(ids[n])) continue;
      Tensor<T>& gi = t.grad(ids[n]);
      if (axis == 0) {
        const T* src = g.data() + starts[n] * g.cols();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += src[i];
      } else {
        const std::size_t w = gi.cols();
        for (std::size_t r = 0; r < gi.rows(); ++r) {
          for (std::size_t c = 0; c < w; ++c) gi[r * w + c] += g[r * g.cols() + starts[n] + c];
        }
      }
    }
  });
}

template <typename T>
Var<T> mean(const Var<T>& x, std::size_t axis) {
  Tape<T>& tape = tape_of(x);
  const Tensor<T>& xv = x.value();
  if (axis >= xv.rank()) {
    throw ShapeError("mean: axis " + std::to_string(axis) + " out of range for shape " + to_string(xv.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xv.dim(i);
  for (std::size_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.dim(i);
  const std::size_t n = xv.dim(axis);
  Shape out_shape;
  for (std::size_t i = 0; i < xv.rank(); ++i) {
    if (i != axis) out_shape.push_back(xv.dim(i));
  }
  if (out_shape.empty()) out_shape = {1};
  Tensor<T> out(out_shape);
  const T inv = T(1) / static_cast<T>(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * n + j) * inner + i];
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= inv;
  require_finite("mean", out);
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {x},
                     [ix, outer, inner, n, inv](Tape<T>& t, const Tensor<T>&, const Tensor<T>& g) {
                       Tensor<T>& gx = t.grad(ix);
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t j = 0; j < n; ++j) {
                           for (std::size_t i = 0; i < inner; ++i) gx[(o * n + j) * inner + i] += g[o * inner + i] * inv;
                         }
                       }
                     });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  Tape<T>& tape = tape_of(x);
  const Tensor<T>& xv = x.value();
  T total = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) total += xv[i];
  Tensor<T> out({1}, total);
  require_finite("sum", out);
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {x}, [ix](Tape<T>& t, const Tensor<T>&, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
  });
}

template <typename T>
Var<T> bce_loss(const Var<T>& probs, const Tensor<T>& targets, const Tensor<T>& mask, double clamp) {
  Tape<T>& tape = tape_of(probs);
  const Tensor<T>& pv = probs.value();
  if (targets.size() != pv.size() || mask.size() != pv.size()) {
    throw ShapeError(mismatch("bce_loss", pv.shape(), targets.size() != pv.size() ? targets.shape() : mask.shape()));
  }
  const T lo = static_cast<T>(clamp), hi = static_cast<T>(1.0 - clamp);
  double count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != T(0) && mask[i] != T(1)) throw Error("bce_loss: mask values must be 0 or 1");
    if (targets[i] != T(0) && targets[i] != T(1)) throw Error("bce_loss: targets must be 0 or 1");
    count += static_cast<double>(mask[i]);
  }
  if (count == 0) throw Error("bce_loss: every element is masked");

  double total = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (mask[i] == T(0)) continue;
    const T p = std::clamp(pv[i], lo, hi);
    total += targets[i] == T(1) ? std::log(static_cast<double>(p)) : std::log(1.0 - static_cast<double>(p));
  }
  Tensor<T> out({1}, static_cast<T>(-total / count));
  require_finite("bce_loss", out);

  const std::size_t ip = probs.id();
  const T inv_count = static_cast<T>(1.0 / count);
  return tape.record(std::move(out), {probs},
                     [ip, targets, mask, lo, hi, inv_count](Tape<T>& t, const Tensor<T>&, const Tensor<T>& g) {
                       const Tensor<T>& p = t.value(ip);
                       Tensor<T>& gp = t.grad(ip);
                       for (std::size_t i = 0; i < p.size(); ++i) {
                         if (mask[i] == T(0) || p[i] < lo || p[i] > hi) continue;
                         const T d = targets[i] == T(1) ? -T(1) / p[i] : T(1) / (T(1) - p[i]);
                         gp[i] += g[0] * inv_count * d;
                       }
                     });
}

#define LOREKT_INSTANTIATE_OPS(T)                                                                    \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> scale(const Var<T>&, T);                                                           \
  template Var<T> matmul(const Var<T>&, const Var<T>&, bool);                                        \
  template Var<T> embedding_lookup(const Var<T>&, const EmbeddingIndex&);                            \
  template Var<T> softmax(const Var<T>&);                                                            \
  template Var<T> layer_norm(const Var<T>&, double);                                                 \
  template Var<T> dropout(const Var<T>&, double, Rng&, bool);                                        \
  template Var<T> sigmoid(const Var<T>&);                                                            \
  template Var<T> gelu(const Var<T>&);                                                               \
  template Var<T> causal_attention(const Var<T>&, const Var<T>&, const Var<T>&, AttentionShape);     \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                                   \
  template Var<T> mean(const Var<T>&, std::size_t);                                                  \
  template Var<T> sum(const Var<T>&);                                                                \
  template Var<T> bce_loss(const Var<T>&, const Tensor<T>&, const Tensor<T>&, double);

LOREKT_INSTANTIATE_OPS(float)
LOREKT_INSTANTIATE_OPS(double)

}  // namespace lorekt::ag
