#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tsat {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or matrix shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value detected in checked mode.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Signal has too few extrema for envelope construction.
class DegenerateSignalError : public Error {
 public:
  using Error::Error;
};

// Errors below are caused by user input (files, flags, configuration).
// The CLI maps them to exit code 2.

class InputError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

class IoError : public InputError {
 public:
  using InputError::InputError;
};

/// Serialized payload disagrees with its own header, or is truncated.
class IntegrityError : public InputError {
 public:
  using InputError::InputError;
};

/// Malformed text input. Row and column are 1-based; 0 means "not applicable".
class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t row = 0, std::size_t column = 0)
      : InputError(what), row_(row), column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

}  // namespace tsat
