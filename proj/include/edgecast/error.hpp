#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace edgecast {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (bad sizes, out-of-range values, empty input).
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// Malformed text input. `line()` is 1-based and counts the header line.
class ParseError : public Error {
  public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

/// A model update produced a non-finite state; the update was rolled back.
class NumericError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

/// Unknown model name, invalid flag combination and similar run-configuration faults.
class ConfigError : public Error {
  public:
    using Error::Error;
};

}  // namespace edgecast
