#include "rollcall/error.hpp"

namespace rollcall {

std::optional<ErrorCode> parse_error_code(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::kNotFound); ++i) {
    auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == name) return code;
  }
  return std::nullopt;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidGradeOrSection:
    case ErrorCode::kInvalidRange:
    case ErrorCode::kConfig:
      return 400;
    case ErrorCode::kAuthFailed:
    case ErrorCode::kAuthExpired:
      return 401;
    case ErrorCode::kForbidden:
    case ErrorCode::kNodeMismatch:
      return 403;
    case ErrorCode::kUnknownStudent:
    case ErrorCode::kUnknownCard:
    case ErrorCode::kNoEvent:
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kDuplicateUid:
    case ErrorCode::kCapacityExhausted:
    case ErrorCode::kConflict:
    case ErrorCode::kSequenceGap:
    case ErrorCode::kUniquenessViolation:
    case ErrorCode::kRegressionRejected:
      return 409;
    case ErrorCode::kCursorExpired:
      return 410;
    case ErrorCode::kBatchTooLarge:
      return 413;
    case ErrorCode::kChecksumMismatch:
    case ErrorCode::kNotAbsent:
    case ErrorCode::kNonSchoolDay:
    case ErrorCode::kFutureDate:
    case ErrorCode::kWindowTooShort:
    case ErrorCode::kClosureNotDue:
      return 422;
    case ErrorCode::kRateLimited:
      return 429;
    case ErrorCode::kEdgeStoreUnavailable:
    case ErrorCode::kStorageFull:
    case ErrorCode::kCorruptStore:
    case ErrorCode::kConnectionRefused:
    case ErrorCode::kNetwork:
      return 503;
  }
  return 500;
}

}  // namespace rollcall
