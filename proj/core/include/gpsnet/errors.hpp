#pragma once

#include <stdexcept>
#include <string>

namespace gpsnet {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A configuration value is outside what an operation supports.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An API was called in the wrong order or on the wrong object.
class UsageError : public Error {
 public:
  using Error::Error;
};

// A serialized graph, config or checkpoint could not be read.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A graph failed validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Training or evaluation produced a non-finite value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace gpsnet
