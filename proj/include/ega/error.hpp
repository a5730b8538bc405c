#pragma once

#include <stdexcept>
#include <string>

namespace ega {

enum class ErrorCode {
  invalid_config,     // bad hyper-parameter or architecture
  rejected_input,     // shape mismatch, non-finite values, bad batch request
  bad_magic,
  truncated_payload,
  unknown_dtype,
  trailing_bytes,
  io,                 // open/read/write failure
  numerical_failure,  // too many steps skipped on non-finite gradients
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) {
    throw Error(code, what);
  }
}

}  // namespace ega
