#pragma once

#include <stdexcept>
#include <string>

namespace mkplan {

// Error classes map one-to-one onto CLI exit codes.
enum class ErrorKind {
  MissingInput = 2,
  ParseError = 3,
  ValidationError = 4,
  NoFeasibleCandidate = 5,
  InternalDeadlock = 6,
  ConfigError = 7,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace mkplan
