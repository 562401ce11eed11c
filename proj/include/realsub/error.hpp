#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace realsub {

/// Failure classes surfaced to the CLI; each maps to a process exit code.
enum class ErrorKind {
  Config = 2,
  InputData = 3,
  ExternalService = 4,
  Invariant = 5,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace realsub
