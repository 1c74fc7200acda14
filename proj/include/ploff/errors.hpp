#pragma once

#include <stdexcept>
#include <string>

namespace ploff {

// Bad input: malformed maps, flags, files, or mismatched artifacts.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure: non-finite losses, divergence, exhausted iteration budgets.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonConvergenceError : public NumericalError {
 public:
  NonConvergenceError(const std::string& what, double last_residual)
      : NumericalError(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, long step) : NumericalError(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace ploff
