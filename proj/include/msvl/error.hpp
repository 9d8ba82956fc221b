#pragma once

#include <stdexcept>
#include <string>

namespace msvl {

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller supplied a value outside an operation's contract.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but mathematically degenerate (single class, singular system).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// A file does not follow the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file has the right layout but inconsistent or damaged content.
class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Reading or writing a file failed at the OS level.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value.
class NumericFault : public Error {
 public:
  using Error::Error;
};

}  // namespace msvl
