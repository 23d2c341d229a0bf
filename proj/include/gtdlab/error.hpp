#pragma once

#include <stdexcept>
#include <string>

namespace gtdlab {

/// Library error with a stable machine-checkable code plus human message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(code + ": " + msg), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

/// Invalid user-supplied configuration (CLI exit code 1, vs 2 for runtime failures).
class ConfigError : public Error {
 public:
  ConfigError(std::string code, const std::string& msg) : Error(std::move(code), msg) {}
};

}  // namespace gtdlab
