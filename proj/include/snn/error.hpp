#pragma once

#include <stdexcept>
#include <string>

namespace snn {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration, arguments, or contract violations. CLI exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

// Shape/dimension mismatches are a flavor of configuration error.
struct ShapeError : ConfigError {
  using ConfigError::ConfigError;
};

// Unreadable, truncated or corrupt data. CLI exit code 3.
struct IoError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required. CLI exit code 4.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace snn
