#pragma once

#include <stdexcept>
#include <string>

namespace llab {

/// Base class for all llab errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dimension or shape disagreement between operands.
struct ShapeError : Error {
  using Error::Error;
};

/// Argument outside an operation's mathematical domain (log of a
/// nonpositive value, zero-norm token, ...).
struct DomainError : Error {
  using Error::Error;
};

/// Invalid or inconsistent configuration. CLI exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

/// Missing/corrupt files, corpus problems, split violations. CLI exit code 3.
struct DataError : Error {
  using Error::Error;
};

/// Numerical failure: divergence, non-finite values, solver breakdown.
/// CLI exit code 4.
struct NumericError : Error {
  using Error::Error;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config = 2;
inline constexpr int data = 3;
inline constexpr int numeric = 4;
}  // namespace exit_code

}  // namespace llab
