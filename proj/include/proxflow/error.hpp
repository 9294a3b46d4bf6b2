#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace proxflow {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition: bad shapes, out-of-range hyperparameters, unknown names.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown: non-finite values, singular matrices.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An iterative method hit its iteration cap.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double residual, std::size_t iterations)
      : NumericalError(what + " (residual " + std::to_string(residual) + " after " +
                       std::to_string(iterations) + " iterations)"),
        residual_(residual),
        iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  std::size_t iterations_;
};

}  // namespace proxflow
