#pragma once

#include <stdexcept>
#include <string>

namespace chm {

// Error categories map 1:1 onto C-API status codes and CLI exit codes:
// Io -> 1, Config/Contract -> 2, Numeric -> 3.
enum class ErrorCode {
  InvalidArgument,
  Io,
  Contract,
  Numeric,
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool ok, ErrorCode code, const std::string& message) {
  if (!ok) fail(code, message);
}

}  // namespace chm
