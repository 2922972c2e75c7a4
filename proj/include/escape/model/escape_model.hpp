#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "escape/core/rng.hpp"
#include "escape/model/config.hpp"
#include "escape/nn/layers.hpp"
#include "escape/structgeo/structure.hpp"

namespace escape::model {

/// A mini-batch of model inputs.
struct Batch {
  std::int64_t size = 0;
  /// [size, seq_len] token ids; 0 is padding.
  std::vector<std::int32_t> tokens;
  /// Optional [size, seq_len] keep flags overriding the pad-derived mask.
  std::vector<std::uint8_t> token_keep;
  /// [size, image_side, image_side] normalized distance matrices, or empty.
  std::vector<float> structure;
};

/// Encoder output: embeddings [B, L+1, d] whose row 0 is the CLS position.
template <class T>
struct EncodedBranch {
  nn::Var<T> embeddings;
  nn::Var<T> cls;  // [B, d]
  /// Key-padding mask over the embedding rows (empty when nothing is masked).
  nn::AttentionMask mask;
};

template <class T>
struct FusedRepresentation {
  nn::Var<T> seq_cls;     // [B, seq_dim]
  nn::Var<T> struct_cls;  // [B, struct_dim]
  nn::Var<T> concat;      // [B, seq_dim + struct_dim]
  /// Updated full embeddings; only set by FuseScope::kFull.
  nn::Var<T> seq_embeddings;
  nn::Var<T> struct_embeddings;
};

/// kFull updates every position; kClsOnly evaluates only the CLS queries,
/// which is all the classification head reads (same CLS values, less work).
enum class FuseScope { kFull, kClsOnly };

struct ParamBreakdown {
  std::int64_t total = 0;
  std::map<std::string, std::int64_t> by_subtree;  // first path component
  std::map<std::string, std::int64_t> by_module;   // first two path components
};

/// Fixed sinusoidal encodings: even columns sin(pos / 10000^(2i/d)), odd cos.
template <class T>
nn::Tensor<T> sinusoidal_positions(std::int64_t positions, std::int64_t dim) {
  nn::Tensor<T> pe({positions, dim});
  for (std::int64_t p = 0; p < positions; ++p)
    for (std::int64_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
      const double angle = static_cast<double>(p) * freq;
      pe[static_cast<std::size_t>(p * dim + i)] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

/// Dual-branch transformer: a sequence encoder over residue tokens, a
/// patch-based encoder over the distance matrix, bidirectional cross-attention
/// between the two, and a linear multilabel head on the concatenated CLS
/// vectors. Single-modality modes skip fusion and feed one CLS to the head.
template <class T>
class EscapeModel {
 public:
  EscapeModel(ModelConfig config, std::uint64_t init_seed) : config_(config) {
    config_.validate();
    CounterRng rng(init_seed);
    const auto& c = config_;
    if (uses_sequence(c.mode)) {
      seq_.token_embedding = &params_.add("seq.token_embedding", {c.vocab, c.seq_dim});
      nn::init::truncated_normal(seq_.token_embedding->value, rng);
      seq_.cls = &params_.add("seq.cls", {c.seq_dim});
      nn::init::truncated_normal(seq_.cls->value, rng);
      seq_.positions = &params_.add("seq.position_embedding", {c.seq_len + 1, c.seq_dim});
      nn::init::truncated_normal(seq_.positions->value, rng);
      for (std::int64_t l = 0; l < c.layers; ++l)
        seq_.layers.push_back(nn::EncoderLayer<T>::create(params_, "seq.layer" + std::to_string(l), c.seq_dim, c.heads,
                                                          c.ffn_mult, rng));
      seq_.norm = nn::LayerNorm<T>::create(params_, "seq.norm", c.seq_dim);
    }
    if (uses_structure(c.mode)) {
      struct_.patch_projection =
          nn::Linear<T>::create(params_, "struct.patch_projection", c.patch * c.patch, c.struct_dim, rng);
      struct_.cls = &params_.add("struct.cls", {c.struct_dim});
      nn::init::truncated_normal(struct_.cls->value, rng);
      for (std::int64_t l = 0; l < c.layers; ++l)
        struct_.layers.push_back(nn::EncoderLayer<T>::create(params_, "struct.layer" + std::to_string(l), c.struct_dim,
                                                             c.heads, c.ffn_mult, rng));
      struct_.norm = nn::LayerNorm<T>::create(params_, "struct.norm", c.struct_dim);
      struct_positions_ = sinusoidal_positions<T>(c.patches() + 1, c.struct_dim);
    }
    if (c.mode == Mode::kBoth) {
      fusion_.seq_attention = nn::MultiHeadAttention<T>::create(params_, "fusion.seq_queries.attn", c.seq_dim,
                                                                c.struct_dim, c.fusion_dim, c.seq_dim, c.heads, rng);
      fusion_.seq_norm = nn::LayerNorm<T>::create(params_, "fusion.seq_queries.norm", c.seq_dim);
      fusion_.seq_ffn =
          nn::FeedForward<T>::create(params_, "fusion.seq_queries.ffn", c.seq_dim, c.ffn_mult * c.seq_dim, rng);
      fusion_.struct_attention = nn::MultiHeadAttention<T>::create(params_, "fusion.struct_queries.attn", c.struct_dim,
                                                                   c.seq_dim, c.fusion_dim, c.struct_dim, c.heads, rng);
      fusion_.struct_norm = nn::LayerNorm<T>::create(params_, "fusion.struct_queries.norm", c.struct_dim);
      fusion_.struct_ffn = nn::FeedForward<T>::create(params_, "fusion.struct_queries.ffn", c.struct_dim,
                                                      c.ffn_mult * c.struct_dim, rng);
    }
    head_ = nn::Linear<T>::create(params_, "head", c.head_width(), c.num_classes, rng);
  }

  EscapeModel(const EscapeModel&) = delete;
  EscapeModel& operator=(const EscapeModel&) = delete;

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore<T>& parameters() { return params_; }
  const nn::ParameterStore<T>& parameters() const { return params_; }

  /// Key-padding mask for the sequence branch over the first `positions`
  /// token slots: CLS always visible, then the batch's keep flags (or
  /// token != pad).
  nn::AttentionMask sequence_mask(const Batch& batch, std::int64_t positions = -1) const {
    const std::int64_t len = config_.seq_len;
    if (positions < 0) positions = len;
    std::vector<std::uint8_t> keep(static_cast<std::size_t>(batch.size * (positions + 1)));
    for (std::int64_t b = 0; b < batch.size; ++b) {
      keep[static_cast<std::size_t>(b * (positions + 1))] = 1;
      for (std::int64_t i = 0; i < positions; ++i)
        keep[static_cast<std::size_t>(b * (positions + 1) + 1 + i)] = token_kept(batch, b, i);
    }
    return nn::AttentionMask::key_padding(batch.size, positions + 1, std::move(keep));
  }

  /// Token slots up to and including the last kept one in any sample.
  std::int64_t occupied_positions(const Batch& batch) const {
    std::int64_t used = 0;
    for (std::int64_t b = 0; b < batch.size; ++b)
      for (std::int64_t i = config_.seq_len; i > used; --i)
        if (token_kept(batch, b, i - 1)) {
          used = i;
          break;
        }
    return used;
  }

  /// Sequence branch. With `trim` set, token slots after the last kept
  /// token of the batch are dropped before encoding: they are masked out of
  /// every attention, so kept positions and CLS are unaffected, and the
  /// embeddings come back as [B, used + 1, d] instead of [B, L + 1, d].
  EncodedBranch<T> seq_encode(nn::Tape<T>& tape, const Batch& batch, CounterRng& rng, bool training,
                              bool trim = false) const {
    if (!seq_.token_embedding) throw Error(ErrorCode::kMissingModality, "model was built without a sequence branch");
    const std::int64_t len = config_.seq_len;
    if (static_cast<std::int64_t>(batch.tokens.size()) != batch.size * len)
      throw Error(ErrorCode::kBadShape, "token batch must be [" + std::to_string(batch.size) + ", " + std::to_string(len) + "]");
    if (!batch.token_keep.empty() && batch.token_keep.size() != batch.tokens.size())
      throw Error(ErrorCode::kBadShape, "token keep mask must match the token batch");
    const std::int64_t used = trim ? occupied_positions(batch) : len;
    std::vector<std::int32_t> ids;
    ids.reserve(static_cast<std::size_t>(batch.size * used));
    for (std::int64_t b = 0; b < batch.size; ++b)
      ids.insert(ids.end(), batch.tokens.begin() + b * len, batch.tokens.begin() + b * len + used);
    auto x = nn::embedding(tape.parameter(*seq_.token_embedding), ids, {batch.size, used});
    x = nn::prepend_row(tape.parameter(*seq_.cls), x);
    x = nn::add(x, nn::leading(tape.parameter(*seq_.positions), used + 1));
    const auto mask = sequence_mask(batch, used);
    for (const auto& layer : seq_.layers) x = layer(tape, x, mask, config_.dropout, rng, training);
    x = seq_.norm(tape, x);
    return {x, nn::select_row(x, 0), mask};
  }

  EncodedBranch<T> struct_encode(nn::Tape<T>& tape, const Batch& batch, CounterRng& rng, bool training) const {
    if (!struct_.cls) throw Error(ErrorCode::kMissingModality, "model was built without a structure branch");
    const auto side = static_cast<std::size_t>(config_.image_side);
    if (batch.structure.empty()) throw Error(ErrorCode::kMissingModality, "batch has no structure inputs");
    if (batch.structure.size() != static_cast<std::size_t>(batch.size) * side * side)
      throw Error(ErrorCode::kBadShape, "structure batch must be [" + std::to_string(batch.size) + ", " +
                                            std::to_string(side) + ", " + std::to_string(side) + "]");
    const auto patch = static_cast<std::size_t>(config_.patch);
    nn::Tensor<T> patches({batch.size, config_.patches(), config_.patch * config_.patch});
    for (std::int64_t b = 0; b < batch.size; ++b) {
      std::span<const float> image(batch.structure.data() + static_cast<std::size_t>(b) * side * side, side * side);
      const auto tiles = structgeo::patchify(image, side, patch);
      std::copy(tiles.begin(), tiles.end(), patches.data() + static_cast<std::size_t>(b) * side * side);
    }
    auto y = struct_.patch_projection(tape, tape.constant(std::move(patches)));
    y = nn::prepend_row(tape.parameter(*struct_.cls), y);
    y = nn::add(y, tape.constant(struct_positions_));
    for (const auto& layer : struct_.layers) y = layer(tape, y, {}, config_.dropout, rng, training);
    y = struct_.norm(tape, y);
    return {y, nn::select_row(y, 0), {}};
  }

  /// Bidirectional cross-attention. Both directions read the pre-fusion
  /// embeddings:
  ///   X' = X + MHA(q=X, kv=Y);  X'' = X' + FFN(LN(X'))
  ///   Y' = Y + MHA(q=Y, kv=X);  Y'' = Y' + FFN(LN(Y'))
  FusedRepresentation<T> cross_fuse(nn::Tape<T>& tape, const EncodedBranch<T>& x, const EncodedBranch<T>& y,
                                    FuseScope scope = FuseScope::kFull) const {
    if (!fusion_.seq_ffn.expand.weight) throw Error(ErrorCode::kMissingModality, "model was built without fusion");
    if (x.embeddings.dim(0) != y.embeddings.dim(0) || x.embeddings.dim(2) != config_.seq_dim ||
        y.embeddings.dim(2) != config_.struct_dim)
      throw Error(ErrorCode::kShapeMismatch, "cross_fuse inputs " + nn::shape_str(x.embeddings.shape()) + " and " +
                                                 nn::shape_str(y.embeddings.shape()));
    auto queries = [&](const EncodedBranch<T>& branch) {
      if (scope == FuseScope::kFull) return branch.embeddings;
      return nn::reshape(branch.cls, {branch.cls.dim(0), 1, branch.cls.dim(1)});
    };
    const auto qx = queries(x);
    const auto qy = queries(y);
    auto xs = nn::add(qx, fusion_.seq_attention(tape, qx, y.embeddings));
    auto ys = nn::add(qy, fusion_.struct_attention(tape, qy, x.embeddings, x.mask));
    xs = nn::add(xs, fusion_.seq_ffn(tape, fusion_.seq_norm(tape, xs)));
    ys = nn::add(ys, fusion_.struct_ffn(tape, fusion_.struct_norm(tape, ys)));
    FusedRepresentation<T> out;
    out.seq_cls = nn::select_row(xs, 0);
    out.struct_cls = nn::select_row(ys, 0);
    out.concat = nn::concat_last(out.seq_cls, out.struct_cls);
    if (scope == FuseScope::kFull) {
      out.seq_embeddings = xs;
      out.struct_embeddings = ys;
    }
    return out;
  }

  /// Logits [B, num_classes]. Sigmoid is left to prediction time.
  nn::Var<T> forward(nn::Tape<T>& tape, const Batch& batch, CounterRng& rng, bool training) const {
    switch (config_.mode) {
      case Mode::kSequenceOnly:
        return head_(tape, seq_encode(tape, batch, rng, training, true).cls);
      case Mode::kStructureOnly:
        return head_(tape, struct_encode(tape, batch, rng, training).cls);
      case Mode::kBoth: {
        if (batch.structure.empty()) throw Error(ErrorCode::kMissingModality, "mode=both needs structure inputs");
        const auto x = seq_encode(tape, batch, rng, training, true);
        const auto y = struct_encode(tape, batch, rng, training);
        return head_(tape, cross_fuse(tape, x, y, FuseScope::kClsOnly).concat);
      }
    }
    throw Error(ErrorCode::kUsage, "unknown mode");
  }

  ParamBreakdown param_count() const {
    ParamBreakdown out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& p = params_[i];
      const auto n = static_cast<std::int64_t>(p.value.size());
      out.total += n;
      const auto first = p.name.find('.');
      out.by_subtree[p.name.substr(0, first)] += n;
      const auto second = first == std::string::npos ? std::string::npos : p.name.find('.', first + 1);
      out.by_module[p.name.substr(0, second)] += n;
    }
    return out;
  }

 private:
  bool token_kept(const Batch& batch, std::int64_t b, std::int64_t i) const {
    const auto k = static_cast<std::size_t>(b * config_.seq_len + i);
    return batch.token_keep.empty() ? batch.tokens[k] != 0 : batch.token_keep[k] != 0;
  }

  struct SequenceBranch {
    nn::Parameter<T>* token_embedding = nullptr;
    nn::Parameter<T>* cls = nullptr;
    nn::Parameter<T>* positions = nullptr;
    std::vector<nn::EncoderLayer<T>> layers;
    nn::LayerNorm<T> norm;
  };
  struct StructureBranch {
    nn::Linear<T> patch_projection;
    nn::Parameter<T>* cls = nullptr;
    std::vector<nn::EncoderLayer<T>> layers;
    nn::LayerNorm<T> norm;
  };
  struct Fusion {
    nn::MultiHeadAttention<T> seq_attention;
    nn::LayerNorm<T> seq_norm;
    nn::FeedForward<T> seq_ffn;
    nn::MultiHeadAttention<T> struct_attention;
    nn::LayerNorm<T> struct_norm;
    nn::FeedForward<T> struct_ffn;
  };

  ModelConfig config_;
  nn::ParameterStore<T> params_;
  SequenceBranch seq_;
  StructureBranch struct_;
  Fusion fusion_;
  nn::Linear<T> head_;
  nn::Tensor<T> struct_positions_;
};

}  // namespace escape::model
