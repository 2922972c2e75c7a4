#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "escape/core/parallel.hpp"
#include "escape/core/rng.hpp"
#include "escape/nn/tape.hpp"

namespace escape::nn {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

namespace detail {

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

inline bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.rbegin(), tail.rend(), full.rbegin());
}

template <class T>
void accumulate(std::span<T> dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

/// a + b where b's shape equals a trailing slice of a's shape (broadcast over
/// the leading axes of a).
template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::require(detail::is_suffix(av.shape(), bv.shape()), ErrorCode::kShapeMismatch,
                  "add " + shape_str(av.shape()) + " + " + shape_str(bv.shape()));
  Tensor<T> out = av;
  out.drop_grad();
  const std::size_t inner = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % inner];
  Tape<T>& tape = a.tape();
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), tape.needs_grad(ia) || tape.needs_grad(ib),
                     [ia, ib, inner](Tape<T>& t, std::span<const T> g) {
                       if (t.needs_grad(ia)) detail::accumulate(t.grad(ia), g);
                       if (t.needs_grad(ib)) {
                         auto gb = t.grad(ib);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i % inner] += g[i];
                       }
                     });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape(), ErrorCode::kShapeMismatch,
                  "mul " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Tape<T>& tape = a.tape();
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), tape.needs_grad(ia) || tape.needs_grad(ib),
                     [ia, ib](Tape<T>& t, std::span<const T> g) {
                       const auto& x = t.value(ia);
                       const auto& y = t.value(ib);
                       if (t.needs_grad(ia)) {
                         auto ga = t.grad(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
                       }
                       if (t.needs_grad(ib)) {
                         auto gb = t.grad(ib);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
                       }
                     });
}

template <class T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  Tape<T>& tape = a.tape();
  const auto ia = a.id();
  return tape.record(std::move(out), tape.needs_grad(ia), [ia, factor](Tape<T>& t, std::span<const T> g) {
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  T total = 0;
  for (T v : a.value().values()) total += v;
  Tape<T>& tape = a.tape();
  const auto ia = a.id();
  return tape.record(Tensor<T>::scalar(total), tape.needs_grad(ia), [ia](Tape<T>& t, std::span<const T> g) {
    auto ga = t.grad(ia);
    for (auto& v : ga) v += g[0];
  });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  detail::require(numel(shape) == static_cast<std::int64_t>(a.value().size()), ErrorCode::kShapeMismatch,
                  "reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  Tensor<T> out(std::move(shape), a.value().storage());
  Tape<T>& tape = a.tape();
  const auto ia = a.id();
  return tape.record(std::move(out), tape.needs_grad(ia),
                     [ia](Tape<T>& t, std::span<const T> g) { detail::accumulate(t.grad(ia), g); });
}

/// Exact (erf-based) GELU.
template <class T>
Var<T> gelu(const Var<T>& a) {
  const auto& av = a.value();
  Tensor<T> out(av.shape());
  constexpr T kInvSqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * av[i] * (T(1) + std::erf(av[i] * kInvSqrt2));
  Tape<T>& tape = a.tape();
  const auto ia = a.id();
  return tape.record(std::move(out), tape.needs_grad(ia), [ia](Tape<T>& t, std::span<const T> g) {
    const auto& x = t.value(ia);
    auto ga = t.grad(ia);
    constexpr T kInvSqrt2Pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T cdf = T(0.5) * (T(1) + std::erf(x[i] * kInvSqrt2));
      const T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * x[i] * x[i]);
      ga[i] += g[i] * (cdf + x[i] * pdf);
    }
  });
}

/// Inverted dropout. Identity (no node recorded) when not training or rate 0.
template <class T>
Var<T> dropout(const Var<T>& a, double rate, CounterRng& rng, bool training) {
  if (!training || rate <= 0.0) return a;
  const auto& av = a.value();
  const T keep_scale = T(1) / static_cast<T>(1.0 - rate);
  std::vector<T> mask(av.size());
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() >= rate ? keep_scale : T(0);
    out[i] = av[i] * mask[i];
  }
  Tape<T>& tape = a.tape();
  const auto ia = a.id();
  return tape.record(std::move(out), tape.needs_grad(ia),
                     [ia, mask = std::move(mask)](Tape<T>& t, std::span<const T> g) {
                       auto ga = t.grad(ia);
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
                     });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// Batched matrix product. A is [..., m, k]; B is either [k, n] (shared by
/// every batch entry) or [..., k, n] with the same leading axes as A.
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::require(av.rank() >= 2 && bv.rank() >= 2, ErrorCode::kShapeMismatch, "matmul needs rank >= 2");
  const std::int64_t m = av.dim(-2), k = av.dim(-1), n = bv.dim(-1);
  detail::require(bv.dim(-2) == k, ErrorCode::kShapeMismatch,
                  "matmul inner dims " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  const bool shared_b = bv.rank() == 2;
  if (!shared_b) {
    detail::require(av.rank() == bv.rank() && std::equal(av.shape().begin(), av.shape().end() - 2, bv.shape().begin()),
                    ErrorCode::kShapeMismatch, "matmul batch dims " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const std::int64_t batch = numel(av.shape()) / (m * k);
  Shape out_shape(av.shape().begin(), av.shape().end() - 1);
  out_shape.push_back(n);
  Tensor<T> out(out_shape);
  if (shared_b) {
    MatMap<T>(out.data(), batch * m, n).noalias() =
        ConstMatMap<T>(av.data(), batch * m, k) * ConstMatMap<T>(bv.data(), k, n);
  } else {
    for (std::int64_t i = 0; i < batch; ++i) {
      MatMap<T>(out.data() + i * m * n, m, n).noalias() =
          ConstMatMap<T>(av.data() + i * m * k, m, k) * ConstMatMap<T>(bv.data() + i * k * n, k, n);
    }
  }
  Tape<T>& tape = a.tape();
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), tape.needs_grad(ia) || tape.needs_grad(ib),
                     [=](Tape<T>& t, std::span<const T> g) {
                       const auto& x = t.value(ia);
                       const auto& y = t.value(ib);
                       const std::int64_t rows = shared_b ? batch * m : m;
                       const std::int64_t reps = shared_b ? 1 : batch;
                       for (std::int64_t i = 0; i < reps; ++i) {
                         ConstMatMap<T> dc(g.data() + i * m * n, rows, n);
                         ConstMatMap<T> xa(x.data() + i * m * k, rows, k);
                         ConstMatMap<T> yb(y.data() + (shared_b ? 0 : i * k * n), k, n);
                         if (t.needs_grad(ia)) MatMap<T>(t.grad(ia).data() + i * m * k, rows, k).noalias() += dc * yb.transpose();
                         if (t.needs_grad(ib))
                           MatMap<T>(t.grad(ib).data() + (shared_b ? 0 : i * k * n), k, n).noalias() += xa.transpose() * dc;
                       }
                     });
}

/// x · W + bias over the last axis of x. W is [in, out]; bias is [out] or absent.
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>* bias = nullptr) {
  Var<T> y = matmul(x, weight);
  return bias ? add(y, *bias) : y;
}

// ---------------------------------------------------------------------------
// Softmax

/// Keep-flags broadcast against a tensor (1 = participate, 0 = masked out).
/// Either empty (no mask) or the same element count as the input.
using KeepMask = std::vector<std::uint8_t>;

namespace detail {

/// Softmax of `n` values at stride `stride`, honouring keep flags. Masked
/// entries get exactly zero; a fully masked row is all zeros.
template <class T>
void softmax_strided(const T* in, T* out, std::int64_t n, std::int64_t stride, const std::uint8_t* keep) {
  T maxv = -std::numeric_limits<T>::infinity();
  for (std::int64_t j = 0; j < n; ++j)
    if (!keep || keep[j * stride]) maxv = std::max(maxv, in[j * stride]);
  if (maxv == -std::numeric_limits<T>::infinity()) {
    for (std::int64_t j = 0; j < n; ++j) out[j * stride] = T(0);
    return;
  }
  T total = 0;
  for (std::int64_t j = 0; j < n; ++j) {
    const T e = (!keep || keep[j * stride]) ? std::exp(in[j * stride] - maxv) : T(0);
    out[j * stride] = e;
    total += e;
  }
  const T inv = T(1) / total;
  for (std::int64_t j = 0; j < n; ++j) out[j * stride] *= inv;
}

}  // namespace detail

template <class T>
Var<T> softmax(const Var<T>& x, int axis, const KeepMask& keep = {}) {
  const auto& xv = x.value();
  if (axis < 0) axis += xv.rank();
  detail::require(axis >= 0 && axis < xv.rank(), ErrorCode::kShapeMismatch, "softmax axis out of range");
  detail::require(keep.empty() || keep.size() == xv.size(), ErrorCode::kShapeMismatch, "softmax mask size");
  const std::int64_t n = xv.dim(axis);
  std::int64_t inner = 1;
  for (int d = axis + 1; d < xv.rank(); ++d) inner *= xv.dim(d);
  const std::int64_t outer = static_cast<std::int64_t>(xv.size()) / (n * inner);
  Tensor<T> out(xv.shape());
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) {
      const std::int64_t base = o * n * inner + i;
      detail::softmax_strided(xv.data() + base, out.data() + base, n, inner, keep.empty() ? nullptr : keep.data() + base);
    }
  Tape<T>& tape = x.tape();
  const auto ix = x.id();
  const std::int32_t iy = static_cast<std::int32_t>(tape.size());
  return tape.record(std::move(out), tape.needs_grad(ix), [=](Tape<T>& t, std::span<const T> g) {
    const auto& y = t.value(iy);
    auto gx = t.grad(ix);
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t i = 0; i < inner; ++i) {
        const std::int64_t base = o * n * inner + i;
        T dot = 0;
        for (std::int64_t j = 0; j < n; ++j) dot += y[base + j * inner] * g[base + j * inner];
        for (std::int64_t j = 0; j < n; ++j) {
          const std::int64_t p = base + j * inner;
          gx[p] += y[p] * (g[p] - dot);
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Normalization

template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5)) {
  const auto& xv = x.value();
  const std::int64_t d = xv.dim(-1);
  detail::require(gain.value().size() == static_cast<std::size_t>(d) && bias.value().size() == static_cast<std::size_t>(d),
                  ErrorCode::kShapeMismatch, "layer_norm affine size");
  const std::int64_t rows = static_cast<std::int64_t>(xv.size()) / d;
  Tensor<T> out(xv.shape());
  std::vector<T> xhat(xv.size());
  std::vector<T> rstd(static_cast<std::size_t>(rows));
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * d;
    T mu = 0;
    for (std::int64_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::int64_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[static_cast<std::size_t>(r)] = rs;
    for (std::int64_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * rs;
      xhat[static_cast<std::size_t>(r * d + j)] = h;
      out[static_cast<std::size_t>(r * d + j)] = h * gv[static_cast<std::size_t>(j)] + bv[static_cast<std::size_t>(j)];
    }
  }
  Tape<T>& tape = x.tape();
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  const bool needs = tape.needs_grad(ix) || tape.needs_grad(ig) || tape.needs_grad(ib);
  return tape.record(std::move(out), needs,
                     [=, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<T>& t, std::span<const T> g) {
                       const auto& gv = t.value(ig);
                       if (t.needs_grad(ig)) {
                         auto gg = t.grad(ig);
                         for (std::int64_t r = 0; r < rows; ++r)
                           for (std::int64_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
                       }
                       if (t.needs_grad(ib)) {
                         auto gb = t.grad(ib);
                         for (std::int64_t r = 0; r < rows; ++r)
                           for (std::int64_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
                       }
                       if (t.needs_grad(ix)) {
                         auto gx = t.grad(ix);
                         for (std::int64_t r = 0; r < rows; ++r) {
                           T mean_dh = 0, mean_dh_h = 0;
                           for (std::int64_t j = 0; j < d; ++j) {
                             const T dh = g[r * d + j] * gv[j];
                             mean_dh += dh;
                             mean_dh_h += dh * xhat[r * d + j];
                           }
                           mean_dh /= static_cast<T>(d);
                           mean_dh_h /= static_cast<T>(d);
                           for (std::int64_t j = 0; j < d; ++j) {
                             const T dh = g[r * d + j] * gv[j];
                             gx[r * d + j] += rstd[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Attention

/// Which (query, key) pairs may interact. Stored as [mb, mq, keys] keep flags
/// where mb is 1 or the batch size and mq is 1 or the query count, so both a
/// per-sample key-padding mask and a shared [Lq, Lk] mask fit.
struct AttentionMask {
  std::int64_t batch = 1;
  std::int64_t queries = 1;
  std::int64_t keys = 0;
  std::vector<std::uint8_t> keep;

  bool empty() const { return keep.empty(); }
  const std::uint8_t* row(std::int64_t b, std::int64_t q) const {
    return keep.data() + ((batch == 1 ? 0 : b) * queries + (queries == 1 ? 0 : q)) * keys;
  }

  static AttentionMask key_padding(std::int64_t batch, std::int64_t keys, std::vector<std::uint8_t> keep) {
    return AttentionMask{batch, 1, keys, std::move(keep)};
  }
  static AttentionMask shared(std::int64_t queries, std::int64_t keys, std::vector<std::uint8_t> keep) {
    return AttentionMask{1, queries, keys, std::move(keep)};
  }
};

/// Multi-head scaled dot-product attention on already projected inputs.
/// q is [B, Lq, D]; k and v are [B, Lk, D]; D splits into `heads` equal
/// slices and each head uses scale 1/sqrt(D / heads). Output is [B, Lq, D].
template <class T>
Var<T> scaled_dot_product_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::int64_t heads,
                                    const AttentionMask& mask = {}) {
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  detail::require(qv.rank() == 3 && kv.rank() == 3 && vv.rank() == 3, ErrorCode::kShapeMismatch,
                  "attention expects [B, L, D] inputs");
  const std::int64_t batch = qv.dim(0), lq = qv.dim(1), width = qv.dim(2), lk = kv.dim(1);
  detail::require(kv.dim(0) == batch && vv.dim(0) == batch && kv.dim(2) == width && vv.shape() == kv.shape(),
                  ErrorCode::kShapeMismatch,
                  "attention shapes q" + shape_str(qv.shape()) + " k" + shape_str(kv.shape()) + " v" + shape_str(vv.shape()));
  detail::require(heads > 0 && width % heads == 0, ErrorCode::kHeadDivisibility,
                  std::to_string(heads) + " heads do not divide width " + std::to_string(width));
  if (!mask.empty()) {
    detail::require(mask.keys == lk && (mask.batch == 1 || mask.batch == batch) && (mask.queries == 1 || mask.queries == lq),
                    ErrorCode::kShapeMismatch, "attention mask shape");
  }
  const std::int64_t dh = width / heads;
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(dh));
  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(batch * heads * lq * lk));
  Tensor<T> out(qv.shape());
  parallel_for(static_cast<std::size_t>(batch * heads), [&](std::size_t job) {
    const std::int64_t b = static_cast<std::int64_t>(job) / heads, h = static_cast<std::int64_t>(job) % heads;
    ConstStridedMap<T> qh(qv.data() + b * lq * width + h * dh, lq, dh, Eigen::OuterStride<>(width));
    ConstStridedMap<T> kh(kv.data() + b * lk * width + h * dh, lk, dh, Eigen::OuterStride<>(width));
    ConstStridedMap<T> vh(vv.data() + b * lk * width + h * dh, lk, dh, Eigen::OuterStride<>(width));
    MatMap<T> p(probs->data() + job * lq * lk, lq, lk);
    p.noalias() = (qh * kh.transpose()) * scale_factor;
    for (std::int64_t i = 0; i < lq; ++i)
      detail::softmax_strided(p.data() + i * lk, p.data() + i * lk, lk, 1, mask.empty() ? nullptr : mask.row(b, i));
    StridedMap<T>(out.data() + b * lq * width + h * dh, lq, dh, Eigen::OuterStride<>(width)).noalias() = p * vh;
  });
  Tape<T>& tape = q.tape();
  const auto iq = q.id(), ik = k.id(), iv = v.id();
  const bool needs = tape.needs_grad(iq) || tape.needs_grad(ik) || tape.needs_grad(iv);
  return tape.record(std::move(out), needs, [=](Tape<T>& t, std::span<const T> g) {
    const auto& qv = t.value(iq);
    const auto& kv = t.value(ik);
    const auto& vv = t.value(iv);
    T* gq = t.needs_grad(iq) ? t.grad(iq).data() : nullptr;
    T* gk = t.needs_grad(ik) ? t.grad(ik).data() : nullptr;
    T* gv = t.needs_grad(iv) ? t.grad(iv).data() : nullptr;
    parallel_for(static_cast<std::size_t>(batch * heads), [&](std::size_t job) {
      const std::int64_t b = static_cast<std::int64_t>(job) / heads, h = static_cast<std::int64_t>(job) % heads;
      const Eigen::OuterStride<> stride(width);
      const std::int64_t qoff = b * lq * width + h * dh, koff = b * lk * width + h * dh;
      ConstStridedMap<T> qh(qv.data() + qoff, lq, dh, stride);
      ConstStridedMap<T> kh(kv.data() + koff, lk, dh, stride);
      ConstStridedMap<T> vh(vv.data() + koff, lk, dh, stride);
      ConstStridedMap<T> dout(g.data() + qoff, lq, dh, stride);
      ConstMatMap<T> p(probs->data() + job * lq * lk, lq, lk);
      if (gv) StridedMap<T>(gv + koff, lk, dh, stride).noalias() += p.transpose() * dout;
      if (!gq && !gk) return;
      RowMat<T> ds = dout * vh.transpose();
      for (std::int64_t i = 0; i < lq; ++i) {
        const T dot = p.row(i).dot(ds.row(i));
        ds.row(i) = (p.row(i).array() * (ds.row(i).array() - dot)).matrix() * scale_factor;
      }
      if (gq) StridedMap<T>(gq + qoff, lq, dh, stride).noalias() += ds * kh;
      if (gk) StridedMap<T>(gk + koff, lk, dh, stride).noalias() += ds.transpose() * qh;
    });
  });
}

// ---------------------------------------------------------------------------
// Indexing and layout

/// Gathers rows of `table` ([V, d]) for each id; the result has shape
/// index_shape + [d]. Ids outside [0, V) raise TokenOutOfRange.
template <class T>
Var<T> embedding(const Var<T>& table, std::span<const std::int32_t> ids, Shape index_shape) {
  const auto& tv = table.value();
  detail::require(tv.rank() == 2, ErrorCode::kShapeMismatch, "embedding table must be rank 2");
  detail::require(numel(index_shape) == static_cast<std::int64_t>(ids.size()), ErrorCode::kShapeMismatch,
                  "embedding index shape");
  const std::int64_t vocab = tv.dim(0), d = tv.dim(1);
  for (auto id : ids)
    if (id < 0 || id >= vocab)
      throw Error(ErrorCode::kTokenOutOfRange, "token id " + std::to_string(id) + " outside [0," + std::to_string(vocab) + ")");
  Shape out_shape = index_shape;
  out_shape.push_back(d);
  Tensor<T> out(out_shape);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tv.data() + ids[i] * d, d, out.data() + static_cast<std::int64_t>(i) * d);
  Tape<T>& tape = table.tape();
  const auto it = table.id();
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return tape.record(std::move(out), tape.needs_grad(it), [it, d, saved = std::move(saved)](Tape<T>& t, std::span<const T> g) {
    auto gt = t.grad(it);
    for (std::size_t i = 0; i < saved.size(); ++i)
      for (std::int64_t j = 0; j < d; ++j) gt[saved[i] * d + j] += g[static_cast<std::int64_t>(i) * d + j];
  });
}

/// Prepends the vector `row` ([d]) to every sequence in x ([B, L, d]).
template <class T>
Var<T> prepend_row(const Var<T>& row, const Var<T>& x) {
  const auto& xv = x.value();
  detail::require(xv.rank() == 3 && row.value().size() == static_cast<std::size_t>(xv.dim(2)),
                  ErrorCode::kShapeMismatch, "prepend_row shapes");
  const std::int64_t batch = xv.dim(0), len = xv.dim(1), d = xv.dim(2);
  Tensor<T> out({batch, len + 1, d});
  for (std::int64_t b = 0; b < batch; ++b) {
    std::copy_n(row.value().data(), d, out.data() + b * (len + 1) * d);
    std::copy_n(xv.data() + b * len * d, len * d, out.data() + (b * (len + 1) + 1) * d);
  }
  Tape<T>& tape = x.tape();
  const auto ir = row.id(), ix = x.id();
  return tape.record(std::move(out), tape.needs_grad(ir) || tape.needs_grad(ix), [=](Tape<T>& t, std::span<const T> g) {
    for (std::int64_t b = 0; b < batch; ++b) {
      if (t.needs_grad(ir)) {
        auto gr = t.grad(ir);
        for (std::int64_t j = 0; j < d; ++j) gr[j] += g[b * (len + 1) * d + j];
      }
      if (t.needs_grad(ix)) {
        auto gx = t.grad(ix);
        for (std::int64_t j = 0; j < len * d; ++j) gx[b * len * d + j] += g[(b * (len + 1) + 1) * d + j];
      }
    }
  });
}

/// First `count` entries along axis 0: [N, ...] -> [count, ...].
template <class T>
Var<T> leading(const Var<T>& x, std::int64_t count) {
  const auto& xv = x.value();
  detail::require(xv.rank() >= 1 && count >= 0 && count <= xv.dim(0), ErrorCode::kShapeMismatch, "leading count");
  if (count == xv.dim(0)) return x;
  Shape shape = xv.shape();
  shape[0] = count;
  const std::int64_t n = numel(shape);
  Tensor<T> out(shape, std::vector<T>(xv.data(), xv.data() + n));
  Tape<T>& tape = x.tape();
  const auto ix = x.id();
  return tape.record(std::move(out), tape.needs_grad(ix), [ix, n](Tape<T>& t, std::span<const T> g) {
    auto gx = t.grad(ix);
    for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i];
  });
}

/// Row `index` of every sequence: [B, L, d] -> [B, d].
template <class T>
Var<T> select_row(const Var<T>& x, std::int64_t index) {
  const auto& xv = x.value();
  detail::require(xv.rank() == 3 && index >= 0 && index < xv.dim(1), ErrorCode::kShapeMismatch, "select_row");
  const std::int64_t batch = xv.dim(0), len = xv.dim(1), d = xv.dim(2);
  Tensor<T> out({batch, d});
  for (std::int64_t b = 0; b < batch; ++b) std::copy_n(xv.data() + (b * len + index) * d, d, out.data() + b * d);
  Tape<T>& tape = x.tape();
  const auto ix = x.id();
  return tape.record(std::move(out), tape.needs_grad(ix), [=](Tape<T>& t, std::span<const T> g) {
    auto gx = t.grad(ix);
    for (std::int64_t b = 0; b < batch; ++b)
      for (std::int64_t j = 0; j < d; ++j) gx[(b * len + index) * d + j] += g[b * d + j];
  });
}

/// Concatenates two [B, d1] and [B, d2] tensors into [B, d1 + d2].
template <class T>
Var<T> concat_last(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::require(av.rank() == 2 && bv.rank() == 2 && av.dim(0) == bv.dim(0), ErrorCode::kShapeMismatch,
                  "concat_last " + shape_str(av.shape()) + " ++ " + shape_str(bv.shape()));
  const std::int64_t rows = av.dim(0), da = av.dim(1), db = bv.dim(1);
  Tensor<T> out({rows, da + db});
  for (std::int64_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * da, da, out.data() + r * (da + db));
    std::copy_n(bv.data() + r * db, db, out.data() + r * (da + db) + da);
  }
  Tape<T>& tape = a.tape();
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), tape.needs_grad(ia) || tape.needs_grad(ib), [=](Tape<T>& t, std::span<const T> g) {
    for (std::int64_t r = 0; r < rows; ++r) {
      if (t.needs_grad(ia)) {
        auto ga = t.grad(ia);
        for (std::int64_t j = 0; j < da; ++j) ga[r * da + j] += g[r * (da + db) + j];
      }
      if (t.needs_grad(ib)) {
        auto gb = t.grad(ib);
        for (std::int64_t j = 0; j < db; ++j) gb[r * db + j] += g[r * (da + db) + da + j];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Loss

/// Binary cross-entropy on logits, summed and divided by `normalizer`
/// (default: element count, i.e. the mean over batch and classes). Uses
/// max(z,0) - z*t + log1p(exp(-|z|)), which never overflows.
template <class T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& targets, T normalizer = T(0)) {
  const auto& z = logits.value();
  detail::require(z.shape() == targets.shape(), ErrorCode::kShapeMismatch,
                  "bce logits " + shape_str(z.shape()) + " vs targets " + shape_str(targets.shape()));
  if (normalizer <= T(0)) normalizer = static_cast<T>(z.size());
  T total = 0;
  for (std::size_t i = 0; i < z.size(); ++i)
    total += std::max(z[i], T(0)) - z[i] * targets[i] + std::log1p(std::exp(-std::abs(z[i])));
  Tape<T>& tape = logits.tape();
  const auto il = logits.id();
  return tape.record(Tensor<T>::scalar(total / normalizer), tape.needs_grad(il),
                     [il, targets, normalizer](Tape<T>& t, std::span<const T> g) {
                       const auto& z = t.value(il);
                       auto gl = t.grad(il);
                       for (std::size_t i = 0; i < gl.size(); ++i) {
                         const T s = z[i] >= 0 ? T(1) / (T(1) + std::exp(-z[i])) : std::exp(z[i]) / (T(1) + std::exp(z[i]));
                         gl[i] += g[0] * (s - targets[i]) / normalizer;
                       }
                     });
}

}  // namespace escape::nn
