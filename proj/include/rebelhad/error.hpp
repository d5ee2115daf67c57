#pragma once

#include <stdexcept>
#include <string>

namespace rebelhad {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents (bad magic, truncated payload, bad header).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure: cannot open, write or rename.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Tensor, cube or mask dimensions that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its admissible range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Invalid scene / training / model specification.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Model file does not match what the caller asked for.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced, factorization failed, or a gradient check failed.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace rebelhad
