#include <gtest/gtest.h>

#include <cmath>

#include "escape/corpus/sequence.hpp"
#include "escape/model/escape_model.hpp"
#include "escape/model/trainer.hpp"
#include "escape/structgeo/esdm.hpp"
#include "escape/synth/synthetic.hpp"
#include "support/gradcheck.hpp"

namespace escape::model {
namespace {

ModelConfig tiny_config(Mode mode = Mode::kBoth) {
  ModelConfig c;
  c.seq_len = 8;
  c.seq_dim = 16;
  c.struct_dim = 12;
  c.layers = 1;
  c.heads = 2;
  c.patch = 8;
  c.image_side = 32;
  c.fusion_dim = 16;
  c.mode = mode;
  return c;
}

/// Random batch: ragged token lengths (at least 2), symmetric structure inputs.
Batch random_batch(const ModelConfig& c, std::int64_t size, std::uint64_t seed, bool with_structure = true) {
  CounterRng rng(seed);
  Batch b;
  b.size = size;
  for (std::int64_t i = 0; i < size; ++i) {
    const auto len = 2 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(c.seq_len - 1)));
    for (std::int64_t t = 0; t < c.seq_len; ++t)
      b.tokens.push_back(t < len ? static_cast<std::int32_t>(1 + rng.below(26)) : 0);
  }
  if (with_structure) {
    const auto side = static_cast<std::size_t>(c.image_side);
    for (std::int64_t i = 0; i < size; ++i) {
      structgeo::CaTrace trace;
      for (int r = 0; r < 6 + static_cast<int>(rng.below(10)); ++r)
        trace.coords.push_back({rng.normal() * 5, rng.normal() * 5, rng.normal() * 5});
      const auto s = structgeo::prepare_struct_input(trace, side);
      b.structure.insert(b.structure.end(), s.values.begin(), s.values.end());
    }
  }
  return b;
}

template <class T>
std::vector<T> values_of(const nn::Var<T>& v) {
  return std::vector<T>(v.value().values().begin(), v.value().values().end());
}

template <class T>
std::vector<T> logits(const EscapeModel<T>& m, const Batch& b) {
  nn::Tape<T> tape;
  CounterRng rng(1);
  return values_of(m.forward(tape, b, rng, false));
}

template <class T>
void zero(EscapeModel<T>& m, const std::string& name) {
  auto& p = m.parameters().get(name);
  nn::init::constant(p.value, T(0));
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no Error thrown";
  return ErrorCode::kUsage;
}

// --- shapes -----------------------------------------------------------------

TEST(Shapes, DefaultBranchOutputs) {
  const ModelConfig c;
  EscapeModel<float> m(c, 1);
  const auto b = random_batch(c, 1, 2);
  nn::Tape<float> tape;
  CounterRng rng(1);
  const auto x = m.seq_encode(tape, b, rng, false);
  const auto y = m.struct_encode(tape, b, rng, false);
  EXPECT_EQ(x.embeddings.shape(), (nn::Shape{1, 201, 256}));
  EXPECT_EQ(x.cls.shape(), (nn::Shape{1, 256}));
  EXPECT_EQ(y.embeddings.shape(), (nn::Shape{1, 197, 192}));
  const auto fused = m.cross_fuse(tape, x, y, FuseScope::kClsOnly);
  EXPECT_EQ(fused.concat.shape(), (nn::Shape{1, 448}));
}

TEST(Shapes, LogitsAreBatchByFiveAndFinite) {
  for (Mode mode : {Mode::kSequenceOnly, Mode::kStructureOnly, Mode::kBoth}) {
    const auto c = tiny_config(mode);
    EscapeModel<float> m(c, 3);
    const auto out = logits(m, random_batch(c, 2, 4));
    ASSERT_EQ(out.size(), 10u);
    for (float v : out) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Shapes, StructureSideMustMatch) {
  const auto c = tiny_config(Mode::kStructureOnly);
  EscapeModel<float> m(c, 1);
  auto b = random_batch(c, 1, 1);
  b.structure.pop_back();
  EXPECT_EQ(code_of([&] { logits(m, b); }), ErrorCode::kBadShape);
}

TEST(Shapes, TokenOutOfRange) {
  const auto c = tiny_config(Mode::kSequenceOnly);
  EscapeModel<float> m(c, 1);
  auto b = random_batch(c, 1, 1, false);
  b.tokens[0] = 27;
  EXPECT_EQ(code_of([&] { logits(m, b); }), ErrorCode::kTokenOutOfRange);
}

TEST(Shapes, HeadsMustDivideWidths) {
  auto c = tiny_config();
  c.heads = 5;
  EXPECT_EQ(code_of([&] { EscapeModel<float>(c, 1); }), ErrorCode::kHeadDivisibility);
  c.heads = 4;  // divides 16 and 12
  EXPECT_NO_THROW(EscapeModel<float>(c, 1));
}

// --- sequence branch --------------------------------------------------------

TEST(SequenceBranch, MaskedContentDoesNotReachCls) {
  const auto c = tiny_config(Mode::kSequenceOnly);
  EscapeModel<double> m(c, 5);
  auto a = random_batch(c, 2, 6, false);
  a.token_keep.assign(a.tokens.size(), 1);
  for (int i = 5; i < 8; ++i) a.token_keep[static_cast<std::size_t>(i)] = a.token_keep[8 + static_cast<std::size_t>(i)] = 0;
  auto b = a;
  for (int i = 5; i < 8; ++i) {
    a.tokens[static_cast<std::size_t>(i)] = 3;
    b.tokens[static_cast<std::size_t>(i)] = 19;
    b.tokens[8 + static_cast<std::size_t>(i)] = 7;
  }
  for (bool trim : {false, true}) {
    nn::Tape<double> tape;
    CounterRng rng(1);
    EXPECT_EQ(values_of(m.seq_encode(tape, a, rng, false, trim).cls), values_of(m.seq_encode(tape, b, rng, false, trim).cls));
  }
}

TEST(SequenceBranch, PaddingTailInvarianceAcrossModes) {
  for (Mode mode : {Mode::kSequenceOnly, Mode::kBoth}) {
    const auto c = tiny_config(mode);
    EscapeModel<double> m(c, 7);
    auto a = random_batch(c, 2, 8);
    // Same kept prefix, different content behind an explicit mask.
    std::fill(a.tokens.begin(), a.tokens.end(), 4);
    a.token_keep.assign(a.tokens.size(), 0);
    for (int i = 0; i < 3; ++i) a.token_keep[static_cast<std::size_t>(i)] = a.token_keep[8 + static_cast<std::size_t>(i)] = 1;
    auto b = a;
    for (int i = 3; i < 8; ++i) b.tokens[static_cast<std::size_t>(i)] = b.tokens[8 + static_cast<std::size_t>(i)] = 25;
    EXPECT_EQ(logits(m, a), logits(m, b)) << to_string(mode);
  }
}

TEST(SequenceBranch, TrimmingMatchesFullLength) {
  const auto c = tiny_config(Mode::kSequenceOnly);
  EscapeModel<double> m(c, 9);
  auto b = random_batch(c, 3, 10, false);
  for (std::size_t i = 0; i < b.tokens.size(); ++i)
    if (i % 8 >= 5) b.tokens[i] = 0;
  nn::Tape<double> tape;
  CounterRng rng(1);
  const auto full = values_of(m.seq_encode(tape, b, rng, false, false).cls);
  const auto trimmed = values_of(m.seq_encode(tape, b, rng, false, true).cls);
  ASSERT_EQ(full.size(), trimmed.size());
  for (std::size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(full[i], trimmed[i], 1e-12);
}

TEST(SequenceBranch, SwappingTokensChangesCls) {
  const auto c = tiny_config(Mode::kSequenceOnly);
  EscapeModel<double> m(c, 11);
  auto a = random_batch(c, 1, 12, false);
  a.tokens[0] = 2;
  a.tokens[1] = 9;
  auto b = a;
  std::swap(b.tokens[0], b.tokens[1]);
  nn::Tape<double> tape;
  CounterRng rng(1);
  EXPECT_NE(values_of(m.seq_encode(tape, a, rng, false).cls), values_of(m.seq_encode(tape, b, rng, false).cls));
}

// --- structure branch -------------------------------------------------------

TEST(StructureBranch, TransposedSymmetricInputSameOutput) {
  const auto c = tiny_config(Mode::kStructureOnly);
  EscapeModel<double> m(c, 13);
  auto a = random_batch(c, 1, 14);
  auto t = a;
  const auto side = static_cast<std::size_t>(c.image_side);
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j) t.structure[i * side + j] = a.structure[j * side + i];
  EXPECT_EQ(t.structure, a.structure);
  nn::Tape<double> tape;
  CounterRng rng(1);
  EXPECT_EQ(values_of(m.struct_encode(tape, a, rng, false).embeddings),
            values_of(m.struct_encode(tape, t, rng, false).embeddings));
}

TEST(StructureBranch, SinusoidalPositions) {
  const auto pe = sinusoidal_positions<double>(197, 192);
  EXPECT_EQ(pe.shape(), (nn::Shape{197, 192}));
  EXPECT_EQ(pe[0], 0.0);
  EXPECT_EQ(pe[1], 1.0);
  EXPECT_NEAR(pe[192 * 3 + 2], std::sin(3.0 / std::pow(10000.0, 2.0 / 192)), 1e-15);
  EXPECT_NEAR(pe[192 * 3 + 3], std::cos(3.0 / std::pow(10000.0, 2.0 / 192)), 1e-15);
}

// --- fusion -----------------------------------------------------------------

TEST(Fusion, ZeroOutputProjectionsAreIdentity) {
  const auto c = tiny_config();
  EscapeModel<double> m(c, 15);
  for (const char* dir : {"seq_queries", "struct_queries"}) {
    const std::string p = std::string("fusion.") + dir;
    zero(m, p + ".attn.wo.weight");
    zero(m, p + ".attn.wo.bias");
    zero(m, p + ".ffn.w2.weight");
    zero(m, p + ".ffn.w2.bias");
  }
  const auto b = random_batch(c, 2, 16);
  nn::Tape<double> tape;
  CounterRng rng(1);
  const auto x = m.seq_encode(tape, b, rng, false);
  const auto y = m.struct_encode(tape, b, rng, false);
  const auto fused = m.cross_fuse(tape, x, y);
  EXPECT_EQ(values_of(fused.seq_cls), values_of(x.cls));
  EXPECT_EQ(values_of(fused.struct_cls), values_of(y.cls));
  EXPECT_EQ(values_of(fused.seq_embeddings), values_of(x.embeddings));
}

TEST(Fusion, IdenticalKeyRowsGiveUniformContribution) {
  const auto c = tiny_config();
  EscapeModel<double> m(c, 17);
  zero(m, "fusion.seq_queries.ffn.w2.weight");
  zero(m, "fusion.seq_queries.ffn.w2.bias");
  const auto b = random_batch(c, 1, 18);
  nn::Tape<double> tape;
  CounterRng rng(1);
  const auto x = m.seq_encode(tape, b, rng, false);
  CounterRng vals(19);
  nn::Tensor<double> rows({1, 5, c.struct_dim});
  for (std::int64_t j = 0; j < c.struct_dim; ++j) {
    const double v = vals.normal();
    for (int r = 0; r < 5; ++r) rows[static_cast<std::size_t>(r * c.struct_dim + j)] = v;
  }
  const auto yv = tape.constant(rows);
  const EncodedBranch<double> y{yv, nn::select_row(yv, 0), {}};
  const auto fused = m.cross_fuse(tape, x, y);
  const auto before = values_of(x.embeddings), after = values_of(fused.seq_embeddings);
  const auto d = static_cast<std::size_t>(c.seq_dim);
  for (std::size_t pos = 1; pos < before.size() / d; ++pos)
    for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(after[pos * d + k] - before[pos * d + k], after[k] - before[k], 1e-12);
}

TEST(Fusion, ShapeMismatch) {
  const auto c = tiny_config();
  EscapeModel<double> m(c, 1);
  const auto b = random_batch(c, 2, 1);
  const auto b1 = random_batch(c, 1, 1);
  nn::Tape<double> tape;
  CounterRng rng(1);
  const auto x = m.seq_encode(tape, b, rng, false);
  const auto y = m.struct_encode(tape, b1, rng, false);
  EXPECT_EQ(code_of([&] { m.cross_fuse(tape, x, y); }), ErrorCode::kShapeMismatch);
}

// --- gradients --------------------------------------------------------------

TEST(Gradients, EveryParameterReachable) {
  const auto c = tiny_config();
  EscapeModel<double> m(c, 21);
  const auto b = random_batch(c, 4, 22);
  std::vector<Example> labels(4);
  std::vector<const Example*> items;
  CounterRng rng(23);
  for (auto& e : labels) {
    for (auto& bit : e.labels.bits) bit = rng.below(2);
    items.push_back(&e);
  }
  nn::Tape<double> tape;
  CounterRng drop(1);
  tape.backward(nn::bce_with_logits(m.forward(tape, b, drop, true), label_targets<double>(items, 5)));
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const auto& p = m.parameters()[i];
    ASSERT_TRUE(p.value.has_grad()) << p.name;
    EXPECT_TRUE(std::any_of(p.value.grad().begin(), p.value.grad().end(), [](double g) { return g != 0.0; })) << p.name;
  }
}

TEST(Gradients, FullModelMatchesFiniteDifferences) {
  const auto c = tiny_config();
  EscapeModel<double> m(c, 25);
  const auto b = random_batch(c, 4, 26);
  nn::Tensor<double> targets({4, 5});
  CounterRng rng(27);
  for (auto& t : targets.values()) t = static_cast<double>(rng.below(2));
  const auto r = escape::testing::check_parameters(m.parameters(), [&](nn::Tape<double>& tape) {
    CounterRng drop(3);  // fixed dropout pattern across evaluations
    return nn::bce_with_logits(m.forward(tape, b, drop, true), targets);
  });
  EXPECT_EQ(r.checked, static_cast<std::size_t>(m.parameters().scalar_count()));
  EXPECT_LT(r.worst, 1e-4) << r.worst_at;
}

// --- forward / modes --------------------------------------------------------

TEST(Modes, SequenceOnlyIgnoresStructure) {
  const auto c = tiny_config(Mode::kSequenceOnly);
  EscapeModel<float> m(c, 29);
  const auto with = random_batch(c, 3, 30, true);
  auto without = with;
  without.structure.clear();
  EXPECT_EQ(logits(m, with), logits(m, without));
}

TEST(Modes, MissingModality) {
  const auto both = tiny_config(Mode::kBoth);
  EscapeModel<float> m(both, 1);
  EXPECT_EQ(code_of([&] { logits(m, random_batch(both, 1, 1, false)); }), ErrorCode::kMissingModality);
  const auto so = tiny_config(Mode::kStructureOnly);
  EscapeModel<float> s(so, 1);
  EXPECT_EQ(code_of([&] { logits(s, random_batch(so, 1, 1, false)); }), ErrorCode::kMissingModality);
  nn::Tape<float> tape;
  CounterRng rng(1);
  EXPECT_EQ(code_of([&] { s.seq_encode(tape, random_batch(so, 1, 1), rng, false); }), ErrorCode::kMissingModality);
}

TEST(Modes, HeadWidthFollowsMode) {
  EXPECT_EQ(EscapeModel<float>(tiny_config(Mode::kSequenceOnly), 1).parameters().get("head.weight").value.shape(),
            (nn::Shape{16, 5}));
  EXPECT_EQ(EscapeModel<float>(tiny_config(Mode::kStructureOnly), 1).parameters().get("head.weight").value.shape(),
            (nn::Shape{12, 5}));
  EXPECT_EQ(EscapeModel<float>(tiny_config(Mode::kBoth), 1).parameters().get("head.weight").value.shape(),
            (nn::Shape{28, 5}));
}

TEST(Modes, DeterministicLogits) {
  const auto c = tiny_config();
  EscapeModel<float> a(c, 31), b(c, 31), other(c, 32);
  const auto batch = random_batch(c, 2, 33);
  EXPECT_EQ(logits(a, batch), logits(b, batch));
  EXPECT_NE(logits(a, batch), logits(other, batch));
}

// --- param_count ------------------------------------------------------------

TEST(ParamCount, DefaultConfigBreakdown) {
  EscapeModel<float> m(ModelConfig{}, 1);
  const auto pc = m.param_count();
  EXPECT_EQ(pc.by_module.at("seq.token_embedding"), 27 * 256);
  EXPECT_EQ(pc.by_subtree.at("head"), 448 * 5 + 5);
  EXPECT_EQ(pc.total, m.parameters().scalar_count());
  EXPECT_GE(pc.total, 5'000'000);
  EXPECT_LE(pc.total, 10'000'000);
  std::int64_t sum = 0;
  for (const auto& [k, v] : pc.by_subtree) sum += v;
  EXPECT_EQ(sum, pc.total);
}

TEST(ParamCount, SingleModalityHeads) {
  ModelConfig c;
  c.mode = Mode::kSequenceOnly;
  EXPECT_EQ(EscapeModel<float>(c, 1).param_count().by_subtree.at("head"), 256 * 5 + 5);
  c.mode = Mode::kStructureOnly;
  EXPECT_EQ(EscapeModel<float>(c, 1).param_count().by_subtree.at("head"), 192 * 5 + 5);
}

// --- training ---------------------------------------------------------------

std::vector<Example> tiny_examples(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
  std::vector<Example> out;
  for (const auto& p : synth::labeled_peptides(n, seed)) {
    Example e;
    e.id = corpus::record_id(p.sequence);
    e.tokens = corpus::tokenize(p.sequence, static_cast<std::size_t>(c.seq_len));
    e.structure = structgeo::prepare_struct_input(p.trace, static_cast<std::size_t>(c.image_side)).values;
    e.labels = p.labels;
    out.push_back(std::move(e));
  }
  return out;
}

TEST(Training, InitialLossNearLn2) {
  const auto c = tiny_config();
  EscapeModel<float> m(c, 35);
  const auto data = tiny_examples(c, 16, 36);
  std::vector<const Example*> items;
  for (const auto& e : data) items.push_back(&e);
  nn::Tape<float> tape;
  CounterRng rng(1);
  const auto loss = nn::bce_with_logits(m.forward(tape, make_batch(items, c), rng, false), label_targets<float>(items, 5));
  EXPECT_NEAR(loss.value().item(), std::log(2.0), 0.1);
}

TEST(Training, SameSeedSameWeights) {
  const auto c = tiny_config();
  const auto data = tiny_examples(c, 20, 37);
  auto run = [&] {
    EscapeModel<float> m(c, 38);
    nn::AdamW<float> opt(m.parameters(), {});
    train(m, opt, data, {.epochs = 2, .batch_size = 8, .micro_batch = 3}, 39);
    std::vector<float> all;
    for (std::size_t i = 0; i < m.parameters().size(); ++i)
      all.insert(all.end(), m.parameters()[i].value.values().begin(), m.parameters()[i].value.values().end());
    return all;
  };
  EXPECT_EQ(run(), run());
}

TEST(Training, LossDecreases) {
  const auto c = tiny_config();
  const auto data = tiny_examples(c, 16, 40);
  EscapeModel<float> m(c, 41);
  nn::AdamW<float> opt(m.parameters(), {.lr = 1e-3});
  std::vector<double> losses;
  train(m, opt, data, {.epochs = 30, .batch_size = 8, .micro_batch = 8}, 42,
        [&](const EpochLog& log) { losses.push_back(log.loss); });
  ASSERT_EQ(losses.size(), 30u);
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Training, EmptyFold) {
  const auto c = tiny_config();
  EscapeModel<float> m(c, 1);
  nn::AdamW<float> opt(m.parameters(), {});
  EXPECT_EQ(code_of([&] { train(m, opt, {}, {}, 1); }), ErrorCode::kEmptyFold);
}

TEST(Training, PredictLogitsKeepsOrder) {
  const auto c = tiny_config();
  const auto data = tiny_examples(c, 11, 43);
  EscapeModel<float> m(c, 44);
  const auto all = predict_logits(m, data, 4);
  ASSERT_EQ(all.size(), 11u);
  const auto single = predict_logits(m, std::vector<Example>{data[9]}, 1);
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(all[9][k], single[0][k], 1e-5);
}

}  // namespace
}  // namespace escape::model
