#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rollcall {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidGradeOrSection,
  kCapacityExhausted,
  kDuplicateUid,
  kUnknownStudent,
  kUnknownCard,
  kForbidden,
  kNotAbsent,
  kNoEvent,
  kNonSchoolDay,
  kClosureNotDue,
  kEdgeStoreUnavailable,
  kStorageFull,
  kUniquenessViolation,
  kRegressionRejected,
  kCorruptStore,
  kAuthFailed,
  kAuthExpired,
  kRateLimited,
  kNodeMismatch,
  kChecksumMismatch,
  kSequenceGap,
  kBatchTooLarge,
  kFutureDate,
  kInvalidRange,
  kCursorExpired,
  kWindowTooShort,
  kConnectionRefused,
  kNetwork,
  kConfig,
  kConflict,
  kNotFound,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidGradeOrSection: return "InvalidGradeOrSection";
    case ErrorCode::kCapacityExhausted: return "CapacityExhausted";
    case ErrorCode::kDuplicateUid: return "DuplicateUid";
    case ErrorCode::kUnknownStudent: return "UnknownStudent";
    case ErrorCode::kUnknownCard: return "UnknownCard";
    case ErrorCode::kForbidden: return "Forbidden";
    case ErrorCode::kNotAbsent: return "NotAbsent";
    case ErrorCode::kNoEvent: return "NoEvent";
    case ErrorCode::kNonSchoolDay: return "NonSchoolDay";
    case ErrorCode::kClosureNotDue: return "ClosureNotDue";
    case ErrorCode::kEdgeStoreUnavailable: return "EdgeStoreUnavailable";
    case ErrorCode::kStorageFull: return "StorageFull";
    case ErrorCode::kUniquenessViolation: return "UniquenessViolation";
    case ErrorCode::kRegressionRejected: return "RegressionRejected";
    case ErrorCode::kCorruptStore: return "CorruptStore";
    case ErrorCode::kAuthFailed: return "AuthFailed";
    case ErrorCode::kAuthExpired: return "AuthExpired";
    case ErrorCode::kRateLimited: return "RateLimited";
    case ErrorCode::kNodeMismatch: return "NodeMismatch";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kSequenceGap: return "SequenceGap";
    case ErrorCode::kBatchTooLarge: return "BatchTooLarge";
    case ErrorCode::kFutureDate: return "FutureDate";
    case ErrorCode::kInvalidRange: return "InvalidRange";
    case ErrorCode::kCursorExpired: return "CursorExpired";
    case ErrorCode::kWindowTooShort: return "WindowTooShort";
    case ErrorCode::kConnectionRefused: return "ConnectionRefused";
    case ErrorCode::kNetwork: return "Network";
    case ErrorCode::kConfig: return "Config";
    case ErrorCode::kConflict: return "Conflict";
    case ErrorCode::kNotFound: return "NotFound";
  }
  return "Unknown";
}

/// Inverse of to_string(ErrorCode); nullopt for unknown names.
std::optional<ErrorCode> parse_error_code(std::string_view name);

/// Status code used by the HTTP API for each error.
int http_status(ErrorCode code);

/// Every failure raised by the library carries one of the codes above; the
/// message is for humans only.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}
  explicit Error(ErrorCode code)
      : std::runtime_error(std::string(to_string(code))), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rollcall
