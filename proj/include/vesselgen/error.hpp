#pragma once

#include <stdexcept>
#include <string>

namespace vesselgen {

// Exception hierarchy. The CLI maps these onto exit codes:
// ParameterError/ConfigError -> 1, IoError/FormatError -> 2, NumericalError -> 3.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

class IndexError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace vesselgen
