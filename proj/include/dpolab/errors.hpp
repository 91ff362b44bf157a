#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dpolab {

/// Invalid or unknown configuration. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data (unreadable file, malformed record). CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A line that is not valid JSON or misses required fields.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A well-formed record that violates a data invariant.
class SchemaError : public DataError {
 public:
  SchemaError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Precondition violated by an argument value (empty response, OOV id, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Non-finite values during scoring or training. CLI exit code 4.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDivergence : public NumericError {
 public:
  TrainingDivergence(std::size_t step, const std::string& what)
      : NumericError("training diverged at step " + std::to_string(step) +
                     ": " + what),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace dpolab
