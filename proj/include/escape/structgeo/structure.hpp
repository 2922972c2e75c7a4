#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "escape/core/error.hpp"
#include "escape/core/text.hpp"

namespace escape::structgeo {

using Vec3 = std::array<double, 3>;

/// Cα coordinates (Ångström) in residue order.
struct CaTrace {
  std::vector<Vec3> coords;
  char chain = ' ';
  /// Human-readable notes about skipped residues (numbering gaps).
  std::vector<std::string> gaps;

  std::size_t size() const { return coords.size(); }
};

/// Dense N×N matrix of doubles, row-major.
struct SquareMatrix {
  std::size_t side = 0;
  std::vector<double> values;

  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, double fill = 0.0) : side(n), values(n * n, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return values[i * side + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * side + j]; }
};

using DistanceMatrix = SquareMatrix;

struct ParseOptions {
  /// Chain to extract; nullopt selects the first chain that has a Cα atom.
  std::optional<char> chain;
};

namespace detail {

inline double parse_coordinate(std::string_view line, std::size_t begin, std::size_t end, std::size_t line_no) {
  const auto field = text::trim(line.substr(begin, end - begin));
  double value = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw Error(ErrorCode::kMalformedRecord, "line " + std::to_string(line_no) + ": bad coordinate '" + std::string(field) + "'");
  return value;
}

}  // namespace detail

/// Extracts one Cα per residue from fixed-column ATOM records.
///
/// Only the first model is read (parsing stops at ENDMDL). For alternate
/// locations the first occurrence of each residue wins. Residue-number gaps
/// are skipped and noted in CaTrace::gaps.
inline CaTrace parse_ca_coordinates(std::string_view text, const ParseOptions& options = {}) {
  CaTrace trace;
  std::optional<char> chain = options.chain;
  std::set<std::tuple<char, int, char>> seen;
  std::optional<int> previous_residue;
  std::size_t line_no = 0;
  for (auto line : text::lines(text)) {
    ++line_no;
    if (line.starts_with("ENDMDL")) break;
    if (!line.starts_with("ATOM")) continue;
    if (line.size() < 54)
      throw Error(ErrorCode::kMalformedRecord, "line " + std::to_string(line_no) + ": ATOM record shorter than 54 columns");
    const auto atom_name = text::trim(line.substr(12, 4));
    if (atom_name != "CA") continue;
    const char chain_id = line[21];
    if (!chain) chain = chain_id;
    if (chain_id != *chain) continue;
    int residue = 0;
    const auto seq_field = text::trim(line.substr(22, 4));
    const auto res = std::from_chars(seq_field.data(), seq_field.data() + seq_field.size(), residue);
    if (seq_field.empty() || res.ec != std::errc())
      throw Error(ErrorCode::kMalformedRecord, "line " + std::to_string(line_no) + ": bad residue number");
    const char insertion = line[26];
    if (!seen.insert({chain_id, residue, insertion}).second) continue;  // later altLoc of a residue already taken
    Vec3 xyz{detail::parse_coordinate(line, 30, 38, line_no), detail::parse_coordinate(line, 38, 46, line_no),
             detail::parse_coordinate(line, 46, 54, line_no)};
    if (previous_residue && residue > *previous_residue + 1 && insertion == ' ')
      trace.gaps.push_back("missing residues " + std::to_string(*previous_residue + 1) + "-" + std::to_string(residue - 1));
    previous_residue = residue;
    trace.coords.push_back(xyz);
  }
  if (trace.coords.empty()) throw Error(ErrorCode::kNoCaAtoms, "no CA atoms found");
  trace.chain = chain.value_or(' ');
  return trace;
}

/// M[i][j] = |r_i - r_j|. Symmetric with an exactly zero diagonal.
inline DistanceMatrix distance_matrix(const CaTrace& trace) {
  const std::size_t n = trace.size();
  if (n < 2) throw Error(ErrorCode::kBadShape, "distance matrix needs at least 2 residues");
  for (const auto& r : trace.coords)
    for (double c : r)
      if (!std::isfinite(c)) throw Error(ErrorCode::kNonFiniteCoordinate, "non-finite Cα coordinate");
  DistanceMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = trace.coords[i][0] - trace.coords[j][0];
      const double dy = trace.coords[i][1] - trace.coords[j][1];
      const double dz = trace.coords[i][2] - trace.coords[j][2];
      m(i, j) = m(j, i) = std::sqrt(dx * dx + dy * dy + dz * dz);
    }
  return m;
}

namespace detail {

// Bilinear sample interpolating along columns first, then rows.
inline double lerp2(const SquareMatrix& m, double y, double x) {
  const std::size_t n = m.side;
  const auto y0 = std::min(static_cast<std::size_t>(y), n - 1);
  const auto x0 = std::min(static_cast<std::size_t>(x), n - 1);
  const std::size_t y1 = std::min(y0 + 1, n - 1), x1 = std::min(x0 + 1, n - 1);
  const double wy = y - static_cast<double>(y0), wx = x - static_cast<double>(x0);
  const double top = m(y0, x0) + wx * (m(y0, x1) - m(y0, x0));
  const double bottom = m(y1, x0) + wx * (m(y1, x1) - m(y1, x0));
  return top + wy * (bottom - top);
}

inline double lerp2_rows_first(const SquareMatrix& m, double y, double x) {
  const std::size_t n = m.side;
  const auto y0 = std::min(static_cast<std::size_t>(y), n - 1);
  const auto x0 = std::min(static_cast<std::size_t>(x), n - 1);
  const std::size_t y1 = std::min(y0 + 1, n - 1), x1 = std::min(x0 + 1, n - 1);
  const double wy = y - static_cast<double>(y0), wx = x - static_cast<double>(x0);
  const double left = m(y0, x0) + wy * (m(y1, x0) - m(y0, x0));
  const double right = m(y0, x1) + wy * (m(y1, x1) - m(y0, x1));
  return left + wx * (right - left);
}

}  // namespace detail

/// Corner-aligned bilinear resize to target×target.
///
/// Sample (i, j) reads source position (i, j) * (N-1)/(target-1). The value is
/// the mean of the two separable interpolation orders, which keeps constant
/// inputs exactly constant and symmetric inputs exactly symmetric.
inline SquareMatrix resize_bilinear(const SquareMatrix& m, std::size_t target = 224) {
  if (m.side < 2 || target < 2) throw Error(ErrorCode::kBadShape, "resize needs side >= 2");
  SquareMatrix out(target);
  std::vector<double> pos(target);
  for (std::size_t i = 0; i < target; ++i)
    pos[i] = std::min(static_cast<double>(i) * static_cast<double>(m.side - 1) / static_cast<double>(target - 1),
                      static_cast<double>(m.side - 1));
  for (std::size_t i = 0; i < target; ++i)
    for (std::size_t j = 0; j < target; ++j) {
      const double a = detail::lerp2(m, pos[i], pos[j]);
      const double b = detail::lerp2_rows_first(m, pos[i], pos[j]);
      out(i, j) = a == b ? a : 0.5 * (a + b);
    }
  return out;
}

/// Divides by the maximum entry so values land in [0, 1]; an all-zero matrix
/// stays zero.
inline SquareMatrix normalize_matrix(const SquareMatrix& m) {
  double maxv = 0.0;
  for (double v : m.values) {
    if (v < 0.0) throw Error(ErrorCode::kBadShape, "normalize_matrix expects non-negative entries");
    maxv = std::max(maxv, v);
  }
  SquareMatrix out = m;
  if (maxv > 0.0)
    for (auto& v : out.values) v /= maxv;
  return out;
}

/// Splits a side×side matrix into non-overlapping patch×patch tiles in
/// row-major tile order, each flattened row-major. Returns
/// (side/patch)^2 rows of patch^2 values, concatenated.
template <class T>
std::vector<T> patchify(std::span<const T> image, std::size_t side, std::size_t patch) {
  if (patch == 0 || side % patch != 0 || image.size() != side * side)
    throw Error(ErrorCode::kBadShape, "patchify: image side " + std::to_string(side) + " not divisible by patch " +
                                          std::to_string(patch));
  const std::size_t grid = side / patch;
  std::vector<T> out(side * side);
  std::size_t k = 0;
  for (std::size_t pr = 0; pr < grid; ++pr)
    for (std::size_t pc = 0; pc < grid; ++pc)
      for (std::size_t r = 0; r < patch; ++r)
        for (std::size_t c = 0; c < patch; ++c) out[k++] = image[(pr * patch + r) * side + pc * patch + c];
  return out;
}

template <class T>
std::vector<T> unpatchify(std::span<const T> patches, std::size_t side, std::size_t patch) {
  if (patch == 0 || side % patch != 0 || patches.size() != side * side)
    throw Error(ErrorCode::kBadShape, "unpatchify: bad geometry");
  const std::size_t grid = side / patch;
  std::vector<T> out(side * side);
  std::size_t k = 0;
  for (std::size_t pr = 0; pr < grid; ++pr)
    for (std::size_t pc = 0; pc < grid; ++pc)
      for (std::size_t r = 0; r < patch; ++r)
        for (std::size_t c = 0; c < patch; ++c) out[(pr * patch + r) * side + pc * patch + c] = patches[k++];
  return out;
}

}  // namespace escape::structgeo
