#pragma once

#include <stdexcept>
#include <string>

namespace actionkit {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// CLI argument problems map to exit code 2, everything above to exit code 1.
struct UsageError : Error {
  using Error::Error;
};

}  // namespace actionkit
