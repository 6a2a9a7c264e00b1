#pragma once

#include <stdexcept>
#include <string>

namespace dgdn {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not match what an operation requires.
struct ShapeError : Error {
  using Error::Error;
};

/// Misuse of the gradient tape (detached tensor, foreign tape, non-scalar loss).
struct TapeError : Error {
  using Error::Error;
};

/// Invalid or inconsistent configuration values.
struct ConfigError : Error {
  using Error::Error;
};

/// File could not be read or written.
struct IoError : Error {
  using Error::Error;
};

/// File content failed an integrity check (truncation, bad checksum).
struct IntegrityError : IoError {
  using IoError::IoError;
};

/// File magic or format version is not one this build understands.
struct VersionError : IoError {
  using IoError::IoError;
};

}  // namespace dgdn
