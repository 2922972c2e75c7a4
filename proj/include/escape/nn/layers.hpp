#pragma once

#include <string>

#include "escape/core/rng.hpp"
#include "escape/nn/ops.hpp"

namespace escape::nn {

namespace init {

template <class T>
void truncated_normal(Tensor<T>& t, CounterRng& rng, double stddev = 0.02) {
  for (auto& v : t.values()) v = static_cast<T>(rng.truncated_normal(stddev));
}

template <class T>
void constant(Tensor<T>& t, T value) {
  for (auto& v : t.values()) v = value;
}

}  // namespace init

template <class T>
struct Linear {
  Parameter<T>* weight = nullptr;  // [in, out]
  Parameter<T>* bias = nullptr;    // [out]

  static Linear create(ParameterStore<T>& store, const std::string& prefix, std::int64_t in, std::int64_t out,
                       CounterRng& rng) {
    Linear l;
    l.weight = &store.add(prefix + ".weight", {in, out});
    init::truncated_normal(l.weight->value, rng);
    l.bias = &store.add(prefix + ".bias", {out});
    return l;
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    const Var<T> w = tape.parameter(*weight);
    const Var<T> b = tape.parameter(*bias);
    return linear(x, w, &b);
  }
};

template <class T>
struct LayerNorm {
  Parameter<T>* gain = nullptr;
  Parameter<T>* bias = nullptr;

  static LayerNorm create(ParameterStore<T>& store, const std::string& prefix, std::int64_t dim) {
    return LayerNorm{&store.add(prefix + ".gain", {dim}, T(1)), &store.add(prefix + ".bias", {dim})};
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    return layer_norm(x, tape.parameter(*gain), tape.parameter(*bias));
  }
};

/// Projects queries from one source and keys/values from another into a
/// shared attention width, attends per head, and projects back out.
/// Self-attention is the case query_source == kv_source.
template <class T>
struct MultiHeadAttention {
  Linear<T> query, key, value, output;
  std::int64_t heads = 1;

  static MultiHeadAttention create(ParameterStore<T>& store, const std::string& prefix, std::int64_t query_dim,
                                   std::int64_t kv_dim, std::int64_t width, std::int64_t out_dim, std::int64_t heads,
                                   CounterRng& rng) {
    if (heads <= 0 || width % heads != 0)
      throw Error(ErrorCode::kHeadDivisibility,
                  prefix + ": " + std::to_string(heads) + " heads do not divide width " + std::to_string(width));
    MultiHeadAttention m;
    m.query = Linear<T>::create(store, prefix + ".wq", query_dim, width, rng);
    m.key = Linear<T>::create(store, prefix + ".wk", kv_dim, width, rng);
    m.value = Linear<T>::create(store, prefix + ".wv", kv_dim, width, rng);
    m.output = Linear<T>::create(store, prefix + ".wo", width, out_dim, rng);
    m.heads = heads;
    return m;
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& query_source, const Var<T>& kv_source,
                    const AttentionMask& mask = {}) const {
    const Var<T> q = query(tape, query_source);
    const Var<T> k = key(tape, kv_source);
    const Var<T> v = value(tape, kv_source);
    return output(tape, scaled_dot_product_attention(q, k, v, heads, mask));
  }
};

template <class T>
struct FeedForward {
  Linear<T> expand, contract;

  static FeedForward create(ParameterStore<T>& store, const std::string& prefix, std::int64_t dim,
                            std::int64_t hidden, CounterRng& rng) {
    return FeedForward{Linear<T>::create(store, prefix + ".w1", dim, hidden, rng),
                       Linear<T>::create(store, prefix + ".w2", hidden, dim, rng)};
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const { return contract(tape, gelu(expand(tape, x))); }
};

/// Pre-norm transformer block:
///   h   = x + Drop(MHA(LN1(x)))
///   out = h + Drop(FFN(LN2(h)))
template <class T>
struct EncoderLayer {
  LayerNorm<T> norm1;
  MultiHeadAttention<T> attention;
  LayerNorm<T> norm2;
  FeedForward<T> ffn;

  static EncoderLayer create(ParameterStore<T>& store, const std::string& prefix, std::int64_t dim,
                             std::int64_t heads, std::int64_t ffn_mult, CounterRng& rng) {
    EncoderLayer e;
    e.norm1 = LayerNorm<T>::create(store, prefix + ".norm1", dim);
    e.attention = MultiHeadAttention<T>::create(store, prefix + ".attn", dim, dim, dim, dim, heads, rng);
    e.norm2 = LayerNorm<T>::create(store, prefix + ".norm2", dim);
    e.ffn = FeedForward<T>::create(store, prefix + ".ffn", dim, ffn_mult * dim, rng);
    return e;
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x, const AttentionMask& mask, double dropout_rate,
                    CounterRng& rng, bool training) const {
    const Var<T> normed = norm1(tape, x);
    const Var<T> h = add(x, dropout(attention(tape, normed, normed, mask), dropout_rate, rng, training));
    return add(h, dropout(ffn(tape, norm2(tape, h)), dropout_rate, rng, training));
  }
};

}  // namespace escape::nn
