#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>

#include <Eigen/Dense>

namespace evm {

// Returns f(x) and writes its gradient. Non-finite values mark x as infeasible.
using ObjectiveFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& gradient)>;

struct MinimizeOptions {
  std::size_t max_iterations = 500;
  double relative_tolerance = 1e-10;
  double gradient_tolerance = 1e-6;
  // The convergence test uses max|gradient| / gradient_scale.
  double gradient_scale = 1.0;
  // Largest allowed max-norm of a single step.
  double max_step = 20.0;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  std::size_t iterations = 0;
  bool converged = false;
  std::string status;

  double scaled_gradient_norm(double scale) const;
};

// BFGS with a backtracking Armijo line search. When an initial inverse Hessian
// is given it seeds the quasi-Newton approximation.
MinimizeResult minimize_bfgs(const ObjectiveFn& fn, const Eigen::VectorXd& x0, const MinimizeOptions& options,
                             const std::optional<Eigen::MatrixXd>& initial_inverse_hessian = std::nullopt);

// Damped Newton iterations on a Hessian formed by central differences of the
// gradient. Used to finish a quasi-Newton run that stalled short of tolerance.
MinimizeResult polish_newton(const ObjectiveFn& fn, MinimizeResult start, const MinimizeOptions& options,
                             std::size_t max_steps);

// Central-difference Jacobian of the gradient, symmetrized. Step per
// coordinate is relative_step * (1 + |x_j|).
Eigen::MatrixXd numerical_hessian(const ObjectiveFn& fn, const Eigen::VectorXd& x, double relative_step = 1e-5);

}  // namespace evm
