#pragma once

#include <stdexcept>
#include <string>

namespace fpk {

// Error taxonomy used across the library. All errors are exceptions derived
// from std::runtime_error so callers can catch coarsely or precisely.

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or dimension disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid configuration value or unknown option.
struct ConfigError : Error {
  using Error::Error;
};

// Argument outside the mathematical domain of a function.
struct DomainError : Error {
  using Error::Error;
};

// Non-finite value or vanishing denominator encountered mid-computation.
struct NumericError : Error {
  using Error::Error;
};

// Caller violated a documented precondition.
struct PreconditionError : Error {
  using Error::Error;
};

// File or serialization failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace fpk
