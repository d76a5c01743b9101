#pragma once

#include <stdexcept>
#include <string>

namespace fcnpose {

/// Broad failure class, used by the CLI to pick an exit code and message prefix.
enum class ErrorCategory { config, data, numeric, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// A precondition of an operation was violated by the caller (bad shapes, bad arguments).
class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

/// Non-finite loss during training, weights that overflow FP16, and similar.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

/// Bad or unusable data: failed scene generation, metrics with nothing to evaluate.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

enum class ParseErrorKind { bad_magic, bad_version, bad_value, truncated, trailing_bytes };

/// Malformed model or annotation file.
class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, const std::string& what)
      : Error(ErrorCategory::data, what), kind_(kind) {}

  ParseErrorKind kind() const noexcept { return kind_; }

 private:
  ParseErrorKind kind_;
};

inline const char* to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::data: return "data";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

}  // namespace fcnpose
