#pragma once

#include <stdexcept>
#include <string>

namespace epnet {

// Base of every error raised by the library. The CLI maps DataError to exit
// code 2 and NumericError to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data: bad files, unknown ids, bounds.
class DataError : public Error {
 public:
  using Error::Error;
};

// A file that could be opened but whose bytes do not describe a valid object.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Capacity, shape, or argument contract violations.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Non-finite losses or gradients.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace epnet
