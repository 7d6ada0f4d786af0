#pragma once

#include <stdexcept>
#include <string>

namespace divsim {

// Invalid scenario parameters (zero-size network, cor out of range, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A node or family used at the wrong layer.
class TypingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Inputs that are individually valid but inconsistent with each other.
class DomainError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Scenario file does not match the schema.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// A generated or loaded network breaks a structural invariant.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reading or writing a file failed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace divsim
