#include "uniflow/error.hpp"

namespace uniflow {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::degenerate_range: return "degenerate_range";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::provenance: return "provenance";
    case ErrorCode::diverged: return "diverged";
  }
  return "unknown";
}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace uniflow
