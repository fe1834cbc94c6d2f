#include "evm/optimizer.hpp"

#include <cmath>

namespace evm {

namespace {

struct Point {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
};

bool finite(const Point& p) { return std::isfinite(p.value) && p.gradient.allFinite(); }

Point evaluate(const ObjectiveFn& fn, Eigen::VectorXd x) {
  Point p;
  p.gradient = Eigen::VectorXd::Zero(x.size());
  p.value = fn(x, p.gradient);
  p.x = std::move(x);
  return p;
}

double relative_change(double before, double after) {
  return std::abs(after - before) / std::max(std::abs(before), 1.0);
}

// Backtracking along direction; returns the accepted point if any.
std::optional<Point> line_search(const ObjectiveFn& fn, const Point& at, const Eigen::VectorXd& direction,
                                 double max_step) {
  double slope = at.gradient.dot(direction);
  double step = 1.0;
  double longest = direction.lpNorm<Eigen::Infinity>();
  if (longest > max_step) step = max_step / longest;
  for (int attempt = 0; attempt < 60; ++attempt) {
    Point trial = evaluate(fn, at.x + step * direction);
    if (finite(trial) && trial.value <= at.value + 1e-4 * step * slope) return trial;
    step *= 0.5;
  }
  return std::nullopt;
}

}  // namespace

double MinimizeResult::scaled_gradient_norm(double scale) const {
  return gradient.size() == 0 ? 0.0 : gradient.lpNorm<Eigen::Infinity>() / scale;
}

Eigen::MatrixXd numerical_hessian(const ObjectiveFn& fn, const Eigen::VectorXd& x, double relative_step) {
  const auto p = x.size();
  Eigen::MatrixXd h(p, p);
  Eigen::VectorXd g_plus(p), g_minus(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double step = relative_step * (1.0 + std::abs(x(j)));
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += step;
    xm(j) -= step;
    g_plus.setZero();
    g_minus.setZero();
    fn(xp, g_plus);
    fn(xm, g_minus);
    h.col(j) = (g_plus - g_minus) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

MinimizeResult minimize_bfgs(const ObjectiveFn& fn, const Eigen::VectorXd& x0, const MinimizeOptions& options,
                             const std::optional<Eigen::MatrixXd>& initial_inverse_hessian) {
  const auto p = x0.size();
  MinimizeResult result;
  Point current = evaluate(fn, x0);
  if (!finite(current)) {
    result.x = current.x;
    result.value = current.value;
    result.gradient = current.gradient;
    result.status = "objective is not finite at the starting point";
    return result;
  }

  Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(p, p);
  Eigen::MatrixXd inv_hessian = initial_inverse_hessian.value_or(identity);
  bool seeded = initial_inverse_hessian.has_value();
  double last_change = std::numeric_limits<double>::infinity();

  auto small_gradient = [&](const Point& pt) {
    return pt.gradient.lpNorm<Eigen::Infinity>() / options.gradient_scale <= options.gradient_tolerance;
  };

  std::size_t it = 0;
  for (; it < options.max_iterations; ++it) {
    if (small_gradient(current) && (it == 0 || last_change < options.relative_tolerance)) {
      result.converged = true;
      result.status = "converged";
      break;
    }
    Eigen::VectorXd direction = -inv_hessian * current.gradient;
    if (!direction.allFinite() || current.gradient.dot(direction) >= 0.0) {
      inv_hessian = identity;
      seeded = false;
      direction = -current.gradient;
    }
    auto next = line_search(fn, current, direction, options.max_step);
    if (!next && seeded) {
      // The seeded curvature may be poor far from the optimum; retry steepest descent.
      inv_hessian = identity;
      seeded = false;
      next = line_search(fn, current, -current.gradient, options.max_step);
    }
    if (!next) {
      result.converged = small_gradient(current);
      result.status = result.converged ? "converged" : "line search failed";
      break;
    }
    Eigen::VectorXd s = next->x - current.x;
    Eigen::VectorXd y = next->gradient - current.gradient;
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!seeded && it == 0) inv_hessian = identity * (sy / y.squaredNorm());
      double rho = 1.0 / sy;
      Eigen::MatrixXd left = identity - rho * s * y.transpose();
      inv_hessian = left * inv_hessian * left.transpose() + rho * s * s.transpose();
    }
    last_change = relative_change(current.value, next->value);
    current = std::move(*next);
  }
  if (it == options.max_iterations && !result.converged) result.status = "iteration limit reached";

  result.x = current.x;
  result.value = current.value;
  result.gradient = current.gradient;
  result.iterations = it;
  return result;
}

MinimizeResult polish_newton(const ObjectiveFn& fn, MinimizeResult start, const MinimizeOptions& options,
                             std::size_t max_steps) {
  Point current{start.x, start.value, start.gradient};
  MinimizeResult result = std::move(start);
  double last_change = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < max_steps; ++k) {
    double gnorm = current.gradient.lpNorm<Eigen::Infinity>() / options.gradient_scale;
    if (gnorm <= options.gradient_tolerance && last_change < options.relative_tolerance) break;
    Eigen::MatrixXd h = numerical_hessian(fn, current.x);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    Eigen::VectorXd direction = ldlt.solve(-current.gradient);
    if (ldlt.info() != Eigen::Success || !direction.allFinite() || current.gradient.dot(direction) >= 0.0)
      direction = -current.gradient;
    auto next = line_search(fn, current, direction, options.max_step);
    if (!next) break;
    last_change = relative_change(current.value, next->value);
    current = std::move(*next);
    ++result.iterations;
    if (last_change == 0.0) break;
  }
  result.x = current.x;
  result.value = current.value;
  result.gradient = current.gradient;
  result.converged = finite(current) &&
                     current.gradient.lpNorm<Eigen::Infinity>() / options.gradient_scale <= options.gradient_tolerance;
  result.status = result.converged ? "converged" : result.status;
  return result;
}

}  // namespace evm
