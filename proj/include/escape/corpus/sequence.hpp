#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "escape/core/error.hpp"
#include "escape/core/hash.hpp"
#include "escape/core/text.hpp"

namespace escape::corpus {

inline constexpr std::size_t kMinLength = 5;
inline constexpr std::size_t kMaxLength = 250;
inline constexpr std::size_t kDefaultTokenLength = 200;
inline constexpr std::int32_t kPadToken = 0;
inline constexpr std::int32_t kVocabularySize = 27;

/// 20 standard residues plus the degenerate codes J, B and Z.
inline constexpr std::string_view kRetainedResidues = "ACDEFGHIKLMNPQRSTVWYJBZ";

enum class RejectReason { kSyntheticResidue, kUndefinedResidue, kIllegalCharacter };

constexpr std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kSyntheticResidue: return "synthetic_residue";
    case RejectReason::kUndefinedResidue: return "undefined_residue";
    case RejectReason::kIllegalCharacter: return "illegal_character";
  }
  return "unknown";
}

struct SequenceCheck {
  std::string sequence;                 // uppercased input when accepted
  std::optional<RejectReason> rejected;  // set when the record must be dropped

  bool ok() const { return !rejected.has_value(); }
};

/// Accepts iff every character (case-insensitive) is one of the 23 retained
/// residue letters. O and U are synthetic, X undefined, anything else (and
/// empty input) illegal. The first offending character decides the reason.
inline SequenceCheck validate_sequence(std::string_view sequence) {
  SequenceCheck check;
  if (sequence.empty()) {
    check.rejected = RejectReason::kIllegalCharacter;
    return check;
  }
  check.sequence = text::upper(sequence);
  for (char c : check.sequence) {
    if (kRetainedResidues.find(c) != std::string_view::npos) continue;
    if (c == 'O' || c == 'U') {
      check.rejected = RejectReason::kSyntheticResidue;
    } else if (c == 'X') {
      check.rejected = RejectReason::kUndefinedResidue;
    } else {
      check.rejected = RejectReason::kIllegalCharacter;
    }
    check.sequence.clear();
    return check;
  }
  return check;
}

inline bool length_filter(std::string_view sequence) {
  return sequence.size() >= kMinLength && sequence.size() <= kMaxLength;
}

/// Canonical record id: SHA-256 hex of the uppercased sequence.
inline std::string record_id(std::string_view sequence) { return sha256_hex(text::upper(sequence)); }

/// Residue letters A..Z map to tokens 1..26; 0 is padding.
inline std::int32_t token_of(char residue) {
  if (residue < 'A' || residue > 'Z')
    throw Error(ErrorCode::kUnknownSymbol, std::string("residue '") + residue + "' is outside the vocabulary");
  return residue - 'A' + 1;
}

inline char residue_of(std::int32_t token) {
  if (token < 1 || token >= kVocabularySize)
    throw Error(ErrorCode::kUnknownSymbol, "token " + std::to_string(token) + " is not a residue");
  return static_cast<char>('A' + token - 1);
}

/// Token ids of exactly `length` entries: truncated past `length`,
/// right-padded with kPadToken.
inline std::vector<std::int32_t> tokenize(std::string_view sequence, std::size_t length = kDefaultTokenLength) {
  std::vector<std::int32_t> ids(length, kPadToken);
  for (std::size_t i = 0; i < std::min(length, sequence.size()); ++i) ids[i] = token_of(sequence[i]);
  return ids;
}

inline std::string detokenize(const std::vector<std::int32_t>& ids) {
  std::string out;
  for (auto id : ids) {
    if (id == kPadToken) break;
    out += residue_of(id);
  }
  return out;
}

}  // namespace escape::corpus
