#pragma once

#include <stdexcept>
#include <string>

namespace conclab {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (bad CSV, NaN entries, atoms at the
/// origin, out-of-range correlations).
class DataError : public Error {
 public:
  using Error::Error;
};

/// An argument outside the documented domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An O(N^2) computation was asked for more atoms than the configured cap.
class CapExceeded : public Error {
 public:
  CapExceeded(std::size_t atoms, std::size_t cap)
      : Error("pair sum over " + std::to_string(atoms) + " atoms exceeds cap of " + std::to_string(cap)) {}
};

/// The support of a measure lies in a hyperplane.
class DegenerateSupport : public Error {
 public:
  using Error::Error;
};

class NonConvergence : public Error {
 public:
  using Error::Error;
};

}  // namespace conclab
