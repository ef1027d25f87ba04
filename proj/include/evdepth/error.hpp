#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evdepth {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidInverseDepth,
  kBehindCamera,
  kDegenerateWarp,
  kParse,
  kEmptyStream,
  kOutOfOrder,
  kOutOfRange,
  kNegativeAge,
  kBoundary,
  kNoData,
  kContractViolation,
  kNoCoverage,
  kIo,
  kConfig,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kInvalidInverseDepth: return "invalid_inverse_depth";
    case ErrorCode::kBehindCamera: return "behind_camera";
    case ErrorCode::kDegenerateWarp: return "degenerate_warp";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kEmptyStream: return "empty_stream";
    case ErrorCode::kOutOfOrder: return "out_of_order";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kNegativeAge: return "negative_age";
    case ErrorCode::kBoundary: return "boundary";
    case ErrorCode::kNoData: return "no_data";
    case ErrorCode::kContractViolation: return "contract_violation";
    case ErrorCode::kNoCoverage: return "no_coverage";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Process exit status for the command line tool: 2 configuration, 3 malformed
// input data, 4 nothing to reconstruct or evaluate, 1 anything else.
constexpr int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kIo:
      return 2;
    case ErrorCode::kParse:
    case ErrorCode::kEmptyStream:
    case ErrorCode::kOutOfOrder:
      return 3;
    case ErrorCode::kNoData:
    case ErrorCode::kNoCoverage:
      return 4;
    default:
      return 1;
  }
}

}  // namespace evdepth
