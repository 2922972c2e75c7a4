#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "escape/core/binary_io.hpp"
#include "escape/structgeo/structure.hpp"

namespace escape::structgeo {

// Cached structure input, little-endian:
//   "ESDM" | u16 version | u16 side | float32[side*side] row-major

inline constexpr std::uint16_t kEsdmVersion = 1;
inline constexpr std::size_t kStructSide = 224;

/// Normalized side×side matrix the structure encoder consumes.
struct StructInput {
  std::size_t side = 0;
  std::vector<float> values;
};

inline StructInput to_struct_input(const SquareMatrix& normalized) {
  StructInput s{normalized.side, std::vector<float>(normalized.values.size())};
  for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = static_cast<float>(normalized.values[i]);
  return s;
}

/// Full preprocessing of a trace: distances, resize, max-normalization.
inline StructInput prepare_struct_input(const CaTrace& trace, std::size_t side = kStructSide) {
  return to_struct_input(normalize_matrix(resize_bilinear(distance_matrix(trace), side)));
}

inline std::string encode_esdm(const StructInput& input) {
  if (input.values.size() != input.side * input.side) throw Error(ErrorCode::kBadShape, "struct input size");
  ByteWriter w;
  w.raw("ESDM");
  w.u16(kEsdmVersion);
  w.u16(static_cast<std::uint16_t>(input.side));
  for (float v : input.values) w.f32(v);
  return w.bytes();
}

inline StructInput decode_esdm(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.raw(4) != "ESDM") throw Error(ErrorCode::kParseError, "not an ESDM blob");
  if (r.u16() != kEsdmVersion) throw Error(ErrorCode::kParseError, "unsupported ESDM version");
  StructInput s;
  s.side = r.u16();
  s.values.resize(s.side * s.side);
  for (auto& v : s.values) {
    v = r.f32();
    if (!std::isfinite(v)) throw Error(ErrorCode::kParseError, "non-finite ESDM entry");
  }
  if (!r.done()) throw Error(ErrorCode::kParseError, "trailing bytes in ESDM blob");
  return s;
}

}  // namespace escape::structgeo
