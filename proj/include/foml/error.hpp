#pragma once

#include <stdexcept>
#include <string>

namespace foml {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition (wrong argument kind, empty input).
class ContractError : public Error {
 public:
  using Error::Error;
};

class UnsupportedOp : public Error {
 public:
  using Error::Error;
};

class UnsupportedSecondOrder : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace foml
