#pragma once

// Quasi-Newton minimization with lower bounds handled by projection.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace polysem {

struct OptimizerOptions {
  double gradient_tolerance = 1e-8;
  double stagnation_tolerance = 1e-12;
  int max_iterations = 500;
};

enum class StopReason { gradient, stagnation, max_iterations, line_search_failure };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::gradient: return "gradient";
    case StopReason::stagnation: return "stagnation";
    case StopReason::max_iterations: return "max-iterations";
    case StopReason::line_search_failure: return "line-search-failure";
  }
  return "unknown";
}

struct OptimizerResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  StopReason reason = StopReason::max_iterations;

  /// Only the gradient test certifies a stationary point.
  [[nodiscard]] bool converged() const { return reason == StopReason::gradient; }
};

/// Objective callback: returns f(x) and writes ∇f(x) into `grad`.
using ValueAndGradient = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

/// Minimizes f subject to x ≥ lower (componentwise; -inf means unbounded).
///
/// BFGS on the inverse Hessian with Armijo backtracking. Trial points are
/// projected onto the bounds; coordinates held at a bound by a positive
/// gradient are frozen for the step. Accepted steps never increase f.
inline OptimizerResult minimize_bfgs(const ValueAndGradient& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                                     const OptimizerOptions& options = {}) {
  const Eigen::Index n = x0.size();
  if (lower.size() != n) throw std::invalid_argument("bound vector has wrong size");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(x0(i) >= lower(i))) throw std::invalid_argument("initial point violates a lower bound");

  auto project = [&](Eigen::VectorXd v) {
    for (Eigen::Index i = 0; i < n; ++i) v(i) = std::max(v(i), lower(i));
    return v;
  };
  auto at_bound = [&](const Eigen::VectorXd& v, Eigen::Index i) {
    return std::isfinite(lower(i)) && v(i) <= lower(i) * (1.0 + 1e-14) + 1e-300;
  };
  auto projected_gradient = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& g) {
    Eigen::VectorXd pg = g;
    for (Eigen::Index i = 0; i < n; ++i)
      if (at_bound(v, i) && g(i) > 0.0) pg(i) = 0.0;
    return pg;
  };

  OptimizerResult result;
  Eigen::VectorXd x = x0;
  Eigen::VectorXd g(n);
  double fx = f(x, g);
  if (!std::isfinite(fx) || !g.allFinite()) throw std::invalid_argument("objective is not finite at the initial point");

  constexpr double kValueNoise = 1e-10;
  Eigen::VectorXd g_trial(n);
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  bool h_is_identity = true;
  bool stalled_once = false;

  // Finds alpha with |slope(alpha)| <= 0.9·|slope(0)| along the projected
  // path while f stays within its noise band. slope(0) must be negative.
  auto slope_search = [&](const Eigen::VectorXd& from, const Eigen::VectorXd& d, double f0, double alpha,
                          Eigen::VectorXd& x_out, double& f_out) {
    const double band = kValueNoise * std::max(std::abs(f0), 1e-300);
    const double s0 = g.dot(d);
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 40; ++k) {
      x_out = project(from + alpha * d);
      f_out = f(x_out, g_trial);
      if (!std::isfinite(f_out) || !g_trial.allFinite() || f_out > f0 + band) {
        hi = alpha;
      } else {
        Eigen::VectorXd moved = d;
        for (Eigen::Index i = 0; i < n; ++i)
          if (x_out(i) != from(i) + alpha * d(i)) moved(i) = 0.0;
        const double slope = g_trial.dot(moved);
        if (std::abs(slope) <= 0.9 * std::abs(s0)) return true;
        if (slope < 0.0)
          lo = alpha;
        else
          hi = alpha;
      }
      alpha = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * alpha;
    }
    return false;
  };

  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd pg = projected_gradient(x, g);
    result.gradient_norm = pg.norm();
    result.iterations = iter;
    if (n == 0 || result.gradient_norm < options.gradient_tolerance) {
      result.reason = StopReason::gradient;
      break;
    }
    if (iter >= options.max_iterations) {
      result.reason = StopReason::max_iterations;
      break;
    }

    // Decouple held coordinates from the curvature model so the step on the
    // free coordinates comes from the free block of h alone.
    std::vector<bool> held(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(at_bound(x, i) && g(i) > 0.0)) continue;
      held[static_cast<std::size_t>(i)] = true;
      h.row(i).setZero();
      h.col(i).setZero();
      h(i, i) = 1.0;
    }

    bool accepted = false;
    Eigen::VectorXd x_trial;
    double f_trial = 0.0;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      Eigen::VectorXd d = -(h * pg);
      for (Eigen::Index i = 0; i < n; ++i)
        if (held[static_cast<std::size_t>(i)]) d(i) = 0.0;
      if (!(pg.dot(d) < 0.0)) {
        h.setIdentity();
        h_is_identity = true;
        d = -pg;
      }
      double alpha = 1.0;
      if (h_is_identity) alpha = std::min(1.0, 1.0 / std::max(pg.lpNorm<Eigen::Infinity>(), 1e-300));
      for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
        x_trial = project(x + alpha * d);
        const Eigen::VectorXd step = x_trial - x;
        if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
        f_trial = f(x_trial, g_trial);
        if (!std::isfinite(f_trial) || !g_trial.allFinite()) continue;
        if (f_trial <= fx + 1e-4 * g.dot(step) && f_trial <= fx) {
          accepted = true;
          break;
        }
        // Near a minimizer the predicted decrease drops below the rounding
        // noise of f. The directional derivative is still accurate there, so
        // search on its sign instead.
        if (std::abs(f_trial - fx) <= kValueNoise * std::max(std::abs(fx), 1e-300)) {
          accepted = slope_search(x, d, fx, alpha, x_trial, f_trial);
          break;
        }
      }
      if (!accepted && !h_is_identity) {
        h.setIdentity();
        h_is_identity = true;
      } else {
        break;
      }
    }
    if (!accepted) {
      result.reason = StopReason::line_search_failure;
      break;
    }

    const Eigen::VectorXd s = x_trial - x;
    Eigen::VectorXd y = g_trial - g;
    for (Eigen::Index i = 0; i < n; ++i)
      if (held[static_cast<std::size_t>(i)]) y(i) = 0.0;
    const double f_prev = fx;
    x = x_trial;
    fx = f_trial;
    g = g_trial;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      if (h_is_identity) {
        h *= sy / y.squaredNorm();
        h_is_identity = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h * y;
      h += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
    }

    const double tol = options.stagnation_tolerance;
    if (std::abs(f_prev - fx) <= tol * std::max(std::abs(fx), 1e-300) &&
        s.lpNorm<Eigen::Infinity>() <= tol * std::max(1.0, x.lpNorm<Eigen::Infinity>())) {
      result.gradient_norm = projected_gradient(x, g).norm();
      // A stalled quasi-Newton model gets one fresh start before we give up.
      if (result.gradient_norm >= options.gradient_tolerance && !h_is_identity && !stalled_once) {
        stalled_once = true;
        h.setIdentity();
        h_is_identity = true;
        continue;
      }
      result.iterations = iter + 1;
      result.reason = result.gradient_norm < options.gradient_tolerance ? StopReason::gradient : StopReason::stagnation;
      break;
    }
    stalled_once = false;
  }
  result.x = x;
  result.value = fx;
  return result;
}

}  // namespace polysem
