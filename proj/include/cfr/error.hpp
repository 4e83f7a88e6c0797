#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cfr {

enum class ErrorCode {
  kInvalidArgument,
  kIoFailure,
  kDuplicateId,
  kDimensionMismatch,
  kNonFiniteComponent,
  kBadMagic,
  kUnsupportedVersion,
  kTruncatedPayload,
  kTrailingBytes,
  kInvalidFormat,
  kUnsortedIds,
  kUnknownId,
  kEmptyAfterNormalization,
  kEmptyStore,
  kFingerprintMismatch,
  kMissingSummary,
  kDuplicateQueryId,
  kEmptyText,
  kSidecarIdMismatch,
  kMalformedLine,
  kNoJudgedQueries,
  kNoCandidates,
};

// Stable CamelCase name, e.g. "BadMagic". Used as the prefix of every
// Error::what() so callers (and the CLI) can match on it.
std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cfr
