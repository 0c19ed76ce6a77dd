#pragma once

#include <stdexcept>
#include <string>

namespace uniflow {

/// Machine-readable error categories. The CLI serializes these verbatim.
enum class ErrorCode {
  invalid_argument,
  shape_mismatch,
  io_error,
  parse_error,
  non_finite,
  degenerate_range,
  out_of_range,
  provenance,
  diverged,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace uniflow
