#pragma once

#include <stdexcept>
#include <string>

namespace reeftex {

/// Error categories map one-to-one onto the CLI exit codes.
enum class ErrorKind : int {
  io = 1,          // unreadable input, undecodable image, write failure
  validation = 2,  // bad parameter, schema mismatch
  internal = 3,    // broken invariant (e.g. leakage guard)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error(ErrorKind::internal, what) {}
};

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace detail
}  // namespace reeftex
