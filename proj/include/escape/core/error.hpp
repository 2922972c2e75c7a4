#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace escape {

enum class ErrorCode {
  kUsage,
  kIo,
  kParseError,
  kMissingColumns,
  kIdMismatch,
  kShapeMismatch,
  kHeadDivisibility,
  kGraphConsumed,
  kTokenOutOfRange,
  kUnknownSymbol,
  kBadShape,
  kMissingModality,
  kEmptyFold,
  kInfeasibleSplit,
  kNoRuleMatched,
  kNoCaAtoms,
  kMalformedRecord,
  kNonFiniteCoordinate,
  kNoPositives,
  kCheckpointMismatch,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage: return "Usage";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kMissingColumns: return "MissingColumns";
    case ErrorCode::kIdMismatch: return "IdMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kHeadDivisibility: return "HeadDivisibility";
    case ErrorCode::kGraphConsumed: return "GraphConsumed";
    case ErrorCode::kTokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::kUnknownSymbol: return "UnknownSymbol";
    case ErrorCode::kBadShape: return "BadShape";
    case ErrorCode::kMissingModality: return "MissingModality";
    case ErrorCode::kEmptyFold: return "EmptyFold";
    case ErrorCode::kInfeasibleSplit: return "InfeasibleSplit";
    case ErrorCode::kNoRuleMatched: return "NoRuleMatched";
    case ErrorCode::kNoCaAtoms: return "NoCaAtoms";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kNonFiniteCoordinate: return "NonFiniteCoordinate";
    case ErrorCode::kNoPositives: return "NoPositives";
    case ErrorCode::kCheckpointMismatch: return "CheckpointMismatch";
  }
  return "Unknown";
}

/// Every failure raised by the toolkit carries a machine-readable code so the
/// CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace escape
