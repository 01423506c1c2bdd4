#pragma once

#include <stdexcept>
#include <string>

namespace filtopt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions or malformed containers.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Factorization failures, indefinite matrices, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Every importance weight underflowed to zero.
class DegenerateWeightsError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Input falls in a model's singular set.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration; `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Unreadable or malformed dataset file. `line()` is 1-based, 0 when unknown.
class DataError : public Error {
 public:
  DataError(const std::string& message, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + message : message),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace filtopt
