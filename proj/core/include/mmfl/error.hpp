#pragma once

#include <stdexcept>
#include <string>

namespace mmfl {

/// Failure categories; the CLI maps each to a distinct exit code.
enum class ErrorCategory {
  config,    ///< invalid or inconsistent configuration
  input,     ///< malformed input data or dimension mismatch
  numeric,   ///< non-finite values produced during training
  protocol,  ///< FL protocol invariant broken at runtime
  io,        ///< file system failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorCategory::input, what) {}
};

class NumericError : public Error {
 public:
  NumericError(const std::string& tensor, const std::string& what)
      : Error(ErrorCategory::numeric, what), tensor_(tensor) {}

  /// Name of the tensor holding the first non-finite entry.
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what) : Error(ErrorCategory::protocol, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

}  // namespace mmfl
