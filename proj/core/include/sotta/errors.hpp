#pragma once

#include <stdexcept>
#include <string>

namespace sotta {

// Shape or dimension mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A documented precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// An adaptation step was requested with nothing to adapt on.
class NoSamplesError : public std::runtime_error {
 public:
  NoSamplesError() : std::runtime_error("no samples available for adaptation") {}
};

// Malformed or incompatible checkpoint bytes.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sotta
