#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "escape/core/error.hpp"

namespace escape::corpus {

inline constexpr std::size_t kNumClasses = 5;

enum class ActivityClass : std::uint8_t { kAntibacterial = 0, kAntiviral, kAntifungal, kAntiparasitic, kAntimicrobial };

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "antibacterial", "antiviral", "antifungal", "antiparasitic", "antimicrobial"};

inline constexpr std::string_view kNonAmpName = "non-amp";

/// Five binary activities; all zeros is a Non-AMP. Functional bits are the
/// first four; the antimicrobial bit is kept >= each of them.
struct LabelVector {
  std::array<std::uint8_t, kNumClasses> bits{};

  static LabelVector from_bits(std::array<std::uint8_t, kNumClasses> b) {
    LabelVector v{b};
    v.normalize();
    return v;
  }

  bool operator[](std::size_t i) const { return bits[i] != 0; }
  bool get(ActivityClass c) const { return bits[static_cast<std::size_t>(c)] != 0; }
  void set(ActivityClass c) {
    bits[static_cast<std::size_t>(c)] = 1;
    normalize();
  }

  bool is_non_amp() const {
    for (auto b : bits)
      if (b) return false;
    return true;
  }

  bool any_functional() const { return bits[0] || bits[1] || bits[2] || bits[3]; }

  /// Sets the antimicrobial bit whenever a functional bit is set.
  void normalize() {
    if (any_functional()) bits[4] = 1;
  }

  LabelVector merged(const LabelVector& other) const {
    LabelVector out;
    for (std::size_t i = 0; i < kNumClasses; ++i) out.bits[i] = bits[i] | other.bits[i];
    return out;
  }

  std::uint8_t mask() const {
    std::uint8_t m = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) m |= static_cast<std::uint8_t>(bits[i] ? 1u << i : 0u);
    return m;
  }

  bool operator==(const LabelVector&) const = default;
};

enum class Fold : std::uint8_t { kUnassigned, kFold1, kFold2, kTest };

constexpr std::string_view to_string(Fold f) {
  switch (f) {
    case Fold::kFold1: return "fold1";
    case Fold::kFold2: return "fold2";
    case Fold::kTest: return "test";
    case Fold::kUnassigned: return "unassigned";
  }
  return "unassigned";
}

inline Fold parse_fold(std::string_view s) {
  if (s == "fold1") return Fold::kFold1;
  if (s == "fold2") return Fold::kFold2;
  if (s == "test") return Fold::kTest;
  if (s == "unassigned" || s.empty()) return Fold::kUnassigned;
  throw Error(ErrorCode::kUsage, "unknown fold '" + std::string(s) + "' (expected fold1, fold2, test)");
}

/// A raw source entry before cleaning.
struct RawEntry {
  std::string source_id;
  std::string sequence;
  std::vector<std::string> annotations;
  std::string origin;
};

/// A curated entry. `id` is a pure function of `sequence` (see record_id).
struct PeptideRecord {
  std::string id;
  std::string sequence;
  LabelVector labels;
  std::set<std::string> sources;
  Fold fold = Fold::kUnassigned;

  bool operator==(const PeptideRecord&) const = default;
};

}  // namespace escape::corpus
