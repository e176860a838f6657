#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ldru {

enum class ErrorCode {
  kInputDomain,
  kConfig,
  kLookup,
  kResource,
  kFormat,
  kShape,
  kDivergence,
  kContract,
  kIo,
};

constexpr std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInputDomain: return "INPUT_DOMAIN";
    case ErrorCode::kConfig: return "CONFIG";
    case ErrorCode::kLookup: return "LOOKUP";
    case ErrorCode::kResource: return "RESOURCE";
    case ErrorCode::kFormat: return "FORMAT";
    case ErrorCode::kShape: return "SHAPE";
    case ErrorCode::kDivergence: return "DIVERGENCE";
    case ErrorCode::kContract: return "CONTRACT";
    case ErrorCode::kIo: return "IO";
  }
  return "UNKNOWN";
}

/// Library-wide exception. `code()` classifies the failure so the CLI can map
/// it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace ldru
