#pragma once

#include <stdexcept>
#include <string>

namespace ctxprobe {

// Base of every error thrown by the library. `exit_code()` is what the CLI
// returns when the error escapes a command.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

// Input did not satisfy a documented contract (malformed file, bad flag,
// invariant violation in user data).
class ValidationError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class LoadError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NotFoundError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InsufficientDataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ProvenanceError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Requested data is not covered by the available traces/samples.
class CoverageError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctxprobe
