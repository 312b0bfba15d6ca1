#pragma once

#include <stdexcept>
#include <string>

namespace dpmts {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or width mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Invalid model, patch or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Field-level validation failure (config files, generator specs, datasets).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Per-timestamp text does not line up with the numeric window.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

class InvalidPromptError : public Error {
 public:
  using Error::Error;
};

/// Sequence longer than the backbone's positional table.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class NonInvertibleError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dpmts
