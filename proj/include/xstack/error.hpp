#pragma once

#include <stdexcept>
#include <string>

namespace xstack {

// Base for every error raised by the library. Subclasses map onto the error
// categories used throughout the modules.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied a value that violates an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A configuration (file, flag, or loss setup) is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A computation produced NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Operation not allowed in the object's current state (closed session,
// frozen whitelist, duplicate adapter, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace xstack
