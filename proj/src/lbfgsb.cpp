#include "mtbo/lbfgsb.hpp"

#include <cmath>
#include <deque>

namespace mtbo {

namespace {

bool finite(double v) { return std::isfinite(v); }

// Gradient with components pointing out of the box at active bounds zeroed.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& g,
                                   const BoxBounds& b) {
  Eigen::VectorXd pg = g;
  for (int i = 0; i < x.size(); ++i) {
    if (x[i] <= b.lower[i] && g[i] > 0.0) pg[i] = 0.0;
    if (x[i] >= b.upper[i] && g[i] < 0.0) pg[i] = 0.0;
  }
  return pg;
}

}  // namespace

OptimizeResult minimize_bounded(const GradientObjective& fn,
                                const Eigen::VectorXd& x0,
                                const BoxBounds& bounds,
                                const LbfgsOptions& opts) {
  return minimize_bounded(fn, ValueObjective(), x0, bounds, opts);
}

OptimizeResult minimize_bounded(const GradientObjective& fn,
                                const ValueObjective& value_fn,
                                const Eigen::VectorXd& x0,
                                const BoxBounds& bounds,
                                const LbfgsOptions& opts) {
  const int n = static_cast<int>(x0.size());
  OptimizeResult res;
  res.x = bounds.clip(x0);

  Eigen::VectorXd g(n), g_new(n);
  double f = fn(res.x, g);
  ++res.evaluations;
  if (!finite(f) || !g.allFinite()) {
    res.value = std::numeric_limits<double>::quiet_NaN();
    return res;
  }

  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;  // (s, y)
  int stall_count = 0;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    res.iterations = iter + 1;
    const Eigen::VectorXd pg = projected_gradient(res.x, g, bounds);
    if (pg.lpNorm<Eigen::Infinity>() <= opts.gradient_tolerance) {
      res.converged = true;
      break;
    }

    // Two-loop recursion on the projected gradient.
    Eigen::VectorXd d = -pg;
    if (!memory.empty()) {
      std::vector<double> alpha(memory.size());
      std::vector<double> rho(memory.size());
      for (int i = static_cast<int>(memory.size()) - 1; i >= 0; --i) {
        const auto& [s, y] = memory[i];
        rho[i] = 1.0 / y.dot(s);
        alpha[i] = rho[i] * s.dot(d);
        d -= alpha[i] * y;
      }
      const auto& [s_last, y_last] = memory.back();
      d *= s_last.dot(y_last) / y_last.squaredNorm();
      for (std::size_t i = 0; i < memory.size(); ++i) {
        const auto& [s, y] = memory[i];
        const double beta = rho[i] * y.dot(d);
        d += (alpha[i] - beta) * s;
      }
    }
    if (memory.empty() || d.dot(g) >= 0.0 || !d.allFinite()) {
      // No curvature information: take a unit-length steepest-descent step so
      // badly scaled objectives cannot blow up the first line search.
      memory.clear();
      d = -pg / std::max(1.0, pg.norm());
    }

    // Projected backtracking line search (Armijo), followed by step doubling
    // while the value keeps improving; the expansion is what lets short
    // quasi-Newton steps stretch out along flat valleys.
    constexpr double c1 = 1e-4;
    const auto trial_value = [&](const Eigen::VectorXd& x) {
      ++res.evaluations;
      return value_fn ? value_fn(x) : fn(x, g_new);
    };
    const auto armijo = [&](const Eigen::VectorXd& x, double fx) {
      return finite(fx) && fx <= f + c1 * g.dot(x - res.x);
    };

    double step = 1.0;
    bool accepted = false;
    bool grad_at_accepted = false;  // g_new already belongs to x_new
    Eigen::VectorXd x_new;
    double f_new = f;
    for (int ls = 0; ls < opts.max_line_search; ++ls) {
      x_new = bounds.clip(res.x + step * d);
      if ((x_new - res.x).lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = trial_value(x_new);
      if (armijo(x_new, f_new)) {
        accepted = true;
        grad_at_accepted = !value_fn;
        break;
      }
      step *= 0.5;
    }
    if (accepted) {
      for (int grow = 0; grow < 12; ++grow) {
        const Eigen::VectorXd x_far = bounds.clip(res.x + 2.0 * step * d);
        if ((x_far - x_new).lpNorm<Eigen::Infinity>() == 0.0) break;
        const double f_far = trial_value(x_far);
        if (!(finite(f_far) && f_far < f_new && armijo(x_far, f_far))) {
          grad_at_accepted = false;  // last gradient eval was at x_far
          break;
        }
        step *= 2.0;
        x_new = x_far;
        f_new = f_far;
        grad_at_accepted = !value_fn;
      }
      if (!grad_at_accepted) {
        const double f_grad = fn(x_new, g_new);
        ++res.evaluations;
        accepted = finite(f_grad) && g_new.allFinite();
        f_new = f_grad;
      }
    }
    if (!accepted) {
      if (!memory.empty()) {
        memory.clear();  // retry from steepest descent next iteration
        continue;
      }
      res.converged = pg.lpNorm<Eigen::Infinity>() <=
                      10.0 * opts.gradient_tolerance;
      break;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      memory.emplace_back(s, y);
      if (static_cast<int>(memory.size()) > opts.memory) memory.pop_front();
    }

    const bool stalled =
        std::abs(f - f_new) <= opts.value_tolerance * (std::abs(f) + 1.0);
    res.x = std::move(x_new);
    f = f_new;
    g = g_new;
    if (stalled && ++stall_count >= 2) {
      res.converged = true;
      break;
    }
    if (!stalled) stall_count = 0;
  }

  res.value = f;
  return res;
}

}  // namespace mtbo
