#include "cfr/error.hpp"

namespace cfr {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonFiniteComponent: return "NonFiniteComponent";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kUnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::kTruncatedPayload: return "TruncatedPayload";
    case ErrorCode::kTrailingBytes: return "TrailingBytes";
    case ErrorCode::kInvalidFormat: return "InvalidFormat";
    case ErrorCode::kUnsortedIds: return "UnsortedIds";
    case ErrorCode::kUnknownId: return "UnknownId";
    case ErrorCode::kEmptyAfterNormalization: return "EmptyAfterNormalization";
    case ErrorCode::kEmptyStore: return "EmptyStore";
    case ErrorCode::kFingerprintMismatch: return "FingerprintMismatch";
    case ErrorCode::kMissingSummary: return "MissingSummary";
    case ErrorCode::kDuplicateQueryId: return "DuplicateQueryId";
    case ErrorCode::kEmptyText: return "EmptyText";
    case ErrorCode::kSidecarIdMismatch: return "SidecarIdMismatch";
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kNoJudgedQueries: return "NoJudgedQueries";
    case ErrorCode::kNoCandidates: return "NoCandidates";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(error_code_name(code)) +
                         (detail.empty() ? "" : ": " + detail)),
      code_(code) {}

}  // namespace cfr
