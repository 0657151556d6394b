#pragma once

#include <Eigen/Core>
#include <functional>
#include <limits>

namespace mtbo {

// Objective callback: returns f(x) and fills grad (same size as x).
using GradientObjective =
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;
// Value-only callback for line-search trials (cheaper when gradients come
// from finite differences).
using ValueObjective = std::function<double(const Eigen::VectorXd&)>;

struct BoxBounds {
  Eigen::VectorXd lower;  // entries may be -inf
  Eigen::VectorXd upper;  // entries may be +inf

  static BoxBounds unbounded(int n) {
    const double inf = std::numeric_limits<double>::infinity();
    return {Eigen::VectorXd::Constant(n, -inf), Eigen::VectorXd::Constant(n, inf)};
  }
  Eigen::VectorXd clip(const Eigen::VectorXd& x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
  }
};

struct LbfgsOptions {
  int max_iterations = 200;
  int memory = 8;
  double gradient_tolerance = 1e-6;  // inf-norm of the projected gradient
  double value_tolerance = 1e-11;    // relative stall threshold
  int max_line_search = 40;
};

struct OptimizeResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

// Box-constrained minimization: limited-memory BFGS directions with a
// projected backtracking line search. Adequate for the smooth, low-dimensional
// objectives here (marginal likelihood, acquisition surfaces); callers
// multi-start it for global coverage.
OptimizeResult minimize_bounded(const GradientObjective& fn,
                                const Eigen::VectorXd& x0,
                                const BoxBounds& bounds,
                                const LbfgsOptions& opts = {});

// Same, with line-search trials evaluated through `value_fn`; the gradient is
// recomputed only at accepted points.
OptimizeResult minimize_bounded(const GradientObjective& fn,
                                const ValueObjective& value_fn,
                                const Eigen::VectorXd& x0,
                                const BoxBounds& bounds,
                                const LbfgsOptions& opts = {});

}  // namespace mtbo
