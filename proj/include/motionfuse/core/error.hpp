#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mfuse {

// Stable, machine-readable error categories. The CLI prints them verbatim.
enum class ErrorCode {
  kInvalidSpec,
  kInvalidArgument,
  kShapeMismatch,
  kNonFinite,
  kRankDeficient,
  kEmptyMix,
  kZeroStd,
  kUnknownLabel,
  kCropTooSmall,
  kCheckpointMismatch,
  kDivergence,
  kIo,
  kFormat,
};

inline std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::kInvalidSpec: return "invalid-spec";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kNonFinite: return "non-finite";
    case ErrorCode::kRankDeficient: return "rank-deficient";
    case ErrorCode::kEmptyMix: return "empty-mix";
    case ErrorCode::kZeroStd: return "zero-std";
    case ErrorCode::kUnknownLabel: return "unknown-label";
    case ErrorCode::kCropTooSmall: return "crop-too-small";
    case ErrorCode::kCheckpointMismatch: return "checkpoint-mismatch";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFormat: return "format";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {
inline void append(std::ostringstream&) {}
template <class A, class... Rest>
void append(std::ostringstream& os, const A& a, const Rest&... rest) {
  os << a;
  append(os, rest...);
}
}  // namespace detail

template <class... Args>
[[noreturn]] void fail(ErrorCode code, const Args&... args) {
  std::ostringstream os;
  detail::append(os, args...);
  throw Error(code, os.str());
}

template <class... Args>
void check(bool cond, ErrorCode code, const Args&... args) {
  if (!cond) fail(code, args...);
}

}  // namespace mfuse
