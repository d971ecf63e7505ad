#pragma once

#include <stdexcept>
#include <string>

namespace adaptest {

enum class ErrorCode {
  invalid_argument,
  validation,
  not_found,
  conflict,
  infeasible,
  numerical,
  io,
};

/// Base exception for every failure raised by the library. The code lets
/// front ends (HTTP, CLI) map failures onto status codes without string
/// matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace adaptest
