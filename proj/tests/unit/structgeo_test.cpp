#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>

#include "escape/core/rng.hpp"
#include "escape/structgeo/esdm.hpp"
#include "escape/structgeo/structure.hpp"
#include "escape/synth/synthetic.hpp"

namespace escape::structgeo {
namespace {

std::string atom(const char* name, int residue, double x, double y, double z, char chain = 'A', char alt = ' ',
                 const char* res_name = "GLY") {
  char buf[96];
  std::snprintf(buf, sizeof buf, "ATOM  %5d %-4s%c%3s %c%4d    %8.3f%8.3f%8.3f  1.00  0.00           C\n", residue,
                name, alt, res_name, chain, residue, x, y, z);
  return buf;
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

// --- parse_ca_coordinates ---------------------------------------------------

TEST(ParseCa, OneCaPerResidue) {
  const std::string pdb = "HEADER    TEST\n" + atom(" N  ", 1, 9, 9, 9) + atom(" CA ", 1, 1, 2, 3) + atom(" C  ", 1, 8, 8, 8) +
                          atom(" CA ", 2, 4, 5, 6) + "TER\nEND\n";
  const auto t = parse_ca_coordinates(pdb);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.coords[0], (Vec3{1, 2, 3}));
  EXPECT_EQ(t.coords[1], (Vec3{4, 5, 6}));
  EXPECT_EQ(t.chain, 'A');
}

TEST(ParseCa, FirstAltLocWins) {
  const std::string pdb = atom(" CA ", 1, 1, 1, 1, 'A', 'A') + atom(" CA ", 1, 7, 7, 7, 'A', 'B') + atom(" CA ", 2, 2, 2, 2);
  const auto t = parse_ca_coordinates(pdb);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.coords[0], (Vec3{1, 1, 1}));
}

TEST(ParseCa, NoCaAtoms) {
  EXPECT_EQ(code_of([] { parse_ca_coordinates(atom(" N  ", 1, 0, 0, 0)); }), ErrorCode::kNoCaAtoms);
  EXPECT_EQ(code_of([] { parse_ca_coordinates(""); }), ErrorCode::kNoCaAtoms);
}

TEST(ParseCa, FirstChainByDefaultOrRequested) {
  const std::string pdb = atom(" CA ", 1, 1, 0, 0, 'A') + atom(" CA ", 1, 2, 0, 0, 'B') + atom(" CA ", 2, 3, 0, 0, 'B');
  EXPECT_EQ(parse_ca_coordinates(pdb).size(), 1u);
  const auto b = parse_ca_coordinates(pdb, {.chain = 'B'});
  EXPECT_EQ(b.size(), 2u);
  EXPECT_EQ(b.chain, 'B');
}

TEST(ParseCa, StopsAtFirstModel) {
  const std::string pdb = "MODEL        1\n" + atom(" CA ", 1, 1, 0, 0) + atom(" CA ", 2, 2, 0, 0) + "ENDMDL\nMODEL        2\n" +
                          atom(" CA ", 1, 5, 0, 0) + atom(" CA ", 2, 6, 0, 0) + "ENDMDL\n";
  const auto t = parse_ca_coordinates(pdb);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.coords[1][0], 2.0);
}

TEST(ParseCa, GapsAreNotedAndSkipped) {
  const auto t = parse_ca_coordinates(atom(" CA ", 1, 0, 0, 0) + atom(" CA ", 5, 1, 0, 0));
  EXPECT_EQ(t.size(), 2u);
  ASSERT_EQ(t.gaps.size(), 1u);
  EXPECT_NE(t.gaps[0].find("2-4"), std::string::npos);
}

TEST(ParseCa, MalformedCoordinate) {
  auto line = atom(" CA ", 1, 0, 0, 0);
  line.replace(32, 4, "x.yz");
  EXPECT_EQ(code_of([&] { parse_ca_coordinates(line); }), ErrorCode::kMalformedRecord);
  EXPECT_EQ(code_of([] { parse_ca_coordinates("ATOM      1  CA  GLY A   1      1.0\n"); }), ErrorCode::kMalformedRecord);
}

TEST(ParseCa, ReadsSyntheticPdbWriter) {
  CounterRng rng(3);
  const auto trace = synth::label_trace(rng, corpus::LabelVector::from_bits({1, 0, 0, 0, 1}), 20);
  const auto back = parse_ca_coordinates(synth::write_pdb(trace, std::string(20, 'A')));
  ASSERT_EQ(back.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i)
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(back.coords[i][k], trace.coords[i][k], 5e-4);
}

// --- distance_matrix --------------------------------------------------------

TEST(DistanceMatrix, PythagoreanTriples) {
  CaTrace t;
  t.coords = {{0, 0, 0}, {3, 4, 0}, {3, 4, 12}};
  const auto m = distance_matrix(t);
  EXPECT_DOUBLE_EQ(m(0, 1), 5.0);
  EXPECT_DOUBLE_EQ(m(1, 2), 12.0);
  EXPECT_DOUBLE_EQ(m(0, 2), 13.0);
  EXPECT_EQ(m(2, 0), m(0, 2));
}

TEST(DistanceMatrix, SingleResidueIsBadShape) {
  CaTrace t;
  t.coords = {{0, 0, 0}};
  EXPECT_EQ(code_of([&] { distance_matrix(t); }), ErrorCode::kBadShape);
}

TEST(DistanceMatrix, MetricPropertiesAndRigidInvariance) {
  CounterRng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    CaTrace t, moved;
    const auto rot = synth::random_rotation(rng);
    const Vec3 shift{rng.uniform() * 100 - 50, rng.uniform() * 100 - 50, rng.uniform() * 100 - 50};
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 p{rng.normal() * 10, rng.normal() * 10, rng.normal() * 10};
      t.coords.push_back(p);
      moved.coords.push_back(synth::add(synth::rotate(rot, p), shift));
    }
    const auto a = distance_matrix(t), b = distance_matrix(moved);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(a(i, i), 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_EQ(a(i, j), a(j, i));
        EXPECT_NEAR(a(i, j), b(i, j), 1e-9);
        for (std::size_t k = 0; k < n; ++k) EXPECT_LE(a(i, k), a(i, j) + a(j, k) + 1e-12);
      }
    }
  }
}

// --- resize_bilinear --------------------------------------------------------

TEST(Resize, ConstantStaysConstant) {
  const auto out = resize_bilinear(SquareMatrix(7, 3.25), 224);
  ASSERT_EQ(out.side, 224u);
  for (double v : out.values) EXPECT_EQ(v, 3.25);
}

TEST(Resize, SameSizeIsIdentity) {
  CounterRng rng(2);
  SquareMatrix m(224);
  for (auto& v : m.values) v = rng.uniform();
  EXPECT_EQ(resize_bilinear(m, 224).values, m.values);
}

TEST(Resize, TwoByTwoCornersAndInterior) {
  SquareMatrix m(2);
  m(0, 0) = 0;
  m(0, 1) = 1;
  m(1, 0) = 1;
  m(1, 1) = 0;
  const auto out = resize_bilinear(m, 224);
  EXPECT_EQ(out(0, 0), 0.0);
  EXPECT_EQ(out(0, 223), 1.0);
  EXPECT_EQ(out(223, 0), 1.0);
  EXPECT_EQ(out(223, 223), 0.0);
  for (std::size_t i : {1u, 50u, 111u, 200u})
    for (std::size_t j : {3u, 112u, 222u}) {
      const double y = i / 223.0, x = j / 223.0;
      EXPECT_NEAR(out(i, j), x * (1 - y) + y * (1 - x), 1e-12);
    }
}

TEST(Resize, PreservesSymmetryExactly) {
  CounterRng rng(8);
  for (std::size_t n : {2u, 5u, 13u, 40u, 250u}) {
    CaTrace t;
    for (std::size_t i = 0; i < n; ++i) t.coords.push_back({rng.normal(), rng.normal(), rng.normal()});
    const auto out = resize_bilinear(distance_matrix(t), 224);
    for (std::size_t i = 0; i < 224; ++i) {
      for (std::size_t j = 0; j < i; ++j) ASSERT_EQ(out(i, j), out(j, i)) << n << " " << i << "," << j;
    }
  }
}

// --- normalize --------------------------------------------------------------

TEST(Normalize, MaxBecomesOne) {
  SquareMatrix m(2);
  m.values = {0, 2, 4, 1};
  EXPECT_EQ(normalize_matrix(m).values, (std::vector<double>{0, 0.5, 1, 0.25}));
}

TEST(Normalize, ZeroMatrixStaysZero) { EXPECT_EQ(normalize_matrix(SquareMatrix(3)).values, std::vector<double>(9, 0.0)); }

TEST(Normalize, PrepareProducesUnitRange) {
  CounterRng rng(4);
  const auto s = prepare_struct_input(synth::label_trace(rng, corpus::LabelVector::from_bits({0, 1, 0, 0, 1}), 30));
  ASSERT_EQ(s.side, kStructSide);
  float hi = 0;
  for (float v : s.values) {
    EXPECT_GE(v, 0.0f);
    hi = std::max(hi, v);
  }
  EXPECT_EQ(hi, 1.0f);
}

// --- patchify ---------------------------------------------------------------

TEST(Patchify, FirstPatchLayout) {
  std::vector<int> image(16);
  for (int i = 0; i < 16; ++i) image[i] = i;
  const auto p = patchify<int>(image, 4, 2);
  EXPECT_EQ(p, (std::vector<int>{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15}));
}

TEST(Patchify, RoundTrip224) {
  CounterRng rng(1);
  std::vector<float> image(224 * 224);
  for (auto& v : image) v = static_cast<float>(rng.uniform());
  const auto p = patchify<float>(image, 224, 16);
  EXPECT_EQ(unpatchify<float>(p, 224, 16), image);
}

TEST(Patchify, IndivisibleSideIsBadShape) {
  std::vector<float> image(225 * 225);
  EXPECT_EQ(code_of([&] { patchify<float>(image, 225, 16); }), ErrorCode::kBadShape);
}

// --- esdm -------------------------------------------------------------------

TEST(Esdm, RoundTripIsBitExact) {
  CounterRng rng(6);
  const auto s = prepare_struct_input(synth::label_trace(rng, corpus::LabelVector::from_bits({0, 0, 1, 0, 1}), 17));
  const auto back = decode_esdm(encode_esdm(s));
  EXPECT_EQ(back.side, s.side);
  EXPECT_EQ(back.values, s.values);
}

TEST(Esdm, RejectsTruncatedAndForeignBlobs) {
  StructInput s{2, {0, 1, 1, 0}};
  auto bytes = encode_esdm(s);
  EXPECT_THROW(decode_esdm(bytes.substr(0, bytes.size() - 1)), Error);
  EXPECT_THROW(decode_esdm(bytes + "x"), Error);
  bytes[0] = 'X';
  EXPECT_THROW(decode_esdm(bytes), Error);
}

}  // namespace
}  // namespace escape::structgeo
