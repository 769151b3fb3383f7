#pragma once

#include <stdexcept>
#include <string>

namespace bhflow {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Field or matrix dimensions do not match the grid or basis.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed input: non-finite values, too few nodes, bad parameters.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Value outside the mathematical domain of an operation (e.g. log of a
/// nonpositive density, inadmissible state).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failed to reach the requested tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual, int iterations)
      : Error(what), residual_(residual), iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

}  // namespace bhflow
