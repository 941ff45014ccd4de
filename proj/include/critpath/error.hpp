#pragma once

#include <stdexcept>
#include <string>

namespace critpath {

// Base class for every error raised by the library. Module-specific errors
// derive from it and carry a machine-readable code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for malformed arguments and violated preconditions that are the
// caller's fault (exit code 2 at the CLI boundary).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Raised when a file cannot be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace critpath
