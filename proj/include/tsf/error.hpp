#pragma once

#include <stdexcept>
#include <string>

namespace tsf {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Input file could not be parsed or holds invalid data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Experiment or model configuration is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsf
