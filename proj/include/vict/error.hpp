#pragma once

#include <stdexcept>
#include <string>

namespace vict {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable input: files, traces, configs, wrong dtypes.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Valid input on which a computation cannot proceed.
class ComputeError : public Error {
 public:
  using Error::Error;
};

class GeometryMismatch : public InputError {
 public:
  using InputError::InputError;
};

class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace vict
