#pragma once

#include <stdexcept>
#include <string>

namespace lineage {

// Root of every exception the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on the caller's arguments was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes or parameter layouts do not line up.
class LayoutError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf appeared in an input or an intermediate value.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Input is well-formed but mathematically degenerate (zero variance, Δθ = 0...).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Explicit-Jacobian path refused because K·|θ| exceeds the configured budget.
class BudgetError : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk data (IDX, manifest, blobs).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lineage
