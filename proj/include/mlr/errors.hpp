#pragma once

#include <stdexcept>
#include <string>

namespace mlr {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientData : Error {
  using Error::Error;
};
struct ShapeMismatch : Error {
  using Error::Error;
};
struct LengthMismatch : Error {
  using Error::Error;
};
struct InvalidSpec : Error {
  using Error::Error;
};
struct InvalidArgument : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct SteppedDoneEnv : Error {
  using Error::Error;
};
struct DegenerateReference : Error {
  using Error::Error;
};
struct EmptyLog : Error {
  using Error::Error;
};

// Config loading failures carry a distinct exit code in the CLI.
struct ConfigError : Error {
  using Error::Error;
};
struct UnknownKey : ConfigError {
  using ConfigError::ConfigError;
};
struct TypeMismatch : ConfigError {
  using ConfigError::ConfigError;
};
struct FileNotFound : ConfigError {
  using ConfigError::ConfigError;
};

}  // namespace mlr
