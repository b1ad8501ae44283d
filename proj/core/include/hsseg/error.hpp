#pragma once

#include <stdexcept>
#include <string>

namespace hsseg {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, violated preconditions, inconsistent
/// configuration. The command-line tool maps these to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// File content that does not parse under its declared format.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Numerical breakdown during estimation or inference (singular systems,
/// underflow of every hypothesis, divergence). Exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace hsseg
