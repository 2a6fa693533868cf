#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>

namespace hdpcmdp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument is outside the mathematical domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Iterative method failed to reach its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// A computation produced a non-finite or degenerate value. `step()` is the
/// offending time index when one applies, -1 otherwise.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, int step = -1) : Error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

using WarningHandler = std::function<void(const std::string&)>;

/// Installs the sink for runtime warnings (clamped shapes, distillation
/// fallbacks). The default writes to stderr. Returns the previous handler.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

}  // namespace hdpcmdp
