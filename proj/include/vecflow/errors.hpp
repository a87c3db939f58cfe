#pragma once

#include <stdexcept>
#include <string>

namespace vecflow {

// A precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Tensor extents do not line up for the requested operation.
class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

// A run configuration is malformed or unsatisfiable. The message names the key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numeric computation produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vecflow
