#pragma once

#include <stdexcept>
#include <string>

namespace sisc {

// Root of every error the library raises. The CLI maps the subclasses onto
// exit codes: numeric failures exit 3, everything else exits 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid shapes, hyperparameters, or model configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad labels, empty datasets, malformed inputs.
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed text input; carries the 1-based line number when known.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// NaN/Inf produced by a kernel, divergence during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Broken invariants between objects that should agree (trace vs model, ...).
class InternalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Checkpoint load failures, each distinguishable by type.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};
class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};
class StructuralError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace sisc
