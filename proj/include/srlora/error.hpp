#pragma once

#include <stdexcept>
#include <string>

namespace srlora {

/// Failure category. The CLI maps these onto its exit codes.
enum class ErrorKind {
  validation,  // bad shapes, bad config, bad arguments
  runtime,     // numerical failure, property failure
  io,          // unreadable/corrupt files
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& what) {
  throw Error(ErrorKind::validation, what);
}

[[noreturn]] inline void fail_runtime(const std::string& what) {
  throw Error(ErrorKind::runtime, what);
}

[[noreturn]] inline void fail_io(const std::string& what) {
  throw Error(ErrorKind::io, what);
}

}  // namespace srlora
