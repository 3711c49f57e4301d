#pragma once

#include <stdexcept>
#include <string>

namespace unlasting {

enum class ErrorCode {
  argument = 1,
  invalid_data,
  insufficient_data,
  numeric,
  step_range,
  training,
  io,
  format,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace unlasting
