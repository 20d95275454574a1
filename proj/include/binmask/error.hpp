#pragma once

#include <stdexcept>
#include <string>

namespace binmask {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent shapes, bindings or settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad user-provided data or argument values.
class InputError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf in activations, gradients or losses.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An operation was called in the wrong object state.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace binmask
