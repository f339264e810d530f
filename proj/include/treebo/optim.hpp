#pragma once

#include <cmath>
#include <limits>

#include "treebo/domain.hpp"

namespace treebo {

struct BoxMinOptions {
  int max_iterations = 60;
  double grad_tol = 1e-5;   // on the projected gradient, max-norm
  double step_tol = 1e-12;  // on the accepted step, max-norm
  double f_tol = 1e-10;     // relative function decrease; two stalls end the run
};

struct BoxMinResult {
  Vector x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline Vector clamp_box(Vector x, const Vector& lo, const Vector& hi) {
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = std::min(std::max(x[i], lo[i]), hi[i]);
  return x;
}

}  // namespace detail

/// Box-constrained quasi-Newton minimizer (projected BFGS with backtracking).
///
/// `f(x, grad)` returns the value and, when `grad` is non-null, fills the
/// gradient.  Non-finite values are treated as infeasible: the line search
/// backtracks away from them, and a non-finite value at the start point makes
/// the whole minimization fail (result keeps value = +inf).
template <typename F>
BoxMinResult minimize_box(F&& f, Vector x0, const Vector& lo, const Vector& hi,
                          const BoxMinOptions& opt = {}) {
  const Eigen::Index k = x0.size();
  BoxMinResult res;
  res.x = detail::clamp_box(std::move(x0), lo, hi);

  Vector g(k);
  double fx = f(res.x, &g);
  if (!std::isfinite(fx)) {
    res.value = fx;
    return res;
  }
  res.value = fx;

  Matrix H = Matrix::Identity(k, k);  // inverse Hessian approximation
  // Direction components pushing out of the box at an active bound are frozen.
  auto clip_active = [&](Vector dir) {
    for (Eigen::Index i = 0; i < k; ++i) {
      if (res.x[i] <= lo[i] && dir[i] < 0.0) dir[i] = 0.0;
      if (res.x[i] >= hi[i] && dir[i] > 0.0) dir[i] = 0.0;
    }
    return dir;
  };

  int stalls = 0;
  double trial_step = 1.0;  // carried across iterations; adapts the scale of H
  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it + 1;
    const Vector pg = res.x - detail::clamp_box(res.x - g, lo, hi);
    if (pg.lpNorm<Eigen::Infinity>() <= opt.grad_tol) {
      res.converged = true;
      break;
    }

    Vector xn;
    double fn = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      Vector dir = clip_active(attempt == 0 ? Vector(-(H * g)) : Vector(-g));
      if (attempt == 1) {
        H.setIdentity();
        trial_step = 1.0;
      }
      const double slope = g.dot(dir);
      if (!(slope < 0.0)) continue;
      double t = trial_step;
      for (int ls = 0; ls < 60; ++ls) {
        xn = detail::clamp_box(res.x + t * dir, lo, hi);
        const Vector step = xn - res.x;
        if (step.lpNorm<Eigen::Infinity>() <= opt.step_tol) break;
        fn = f(xn, nullptr);
        if (std::isfinite(fn) && fn <= fx + 1e-4 * g.dot(step)) {
          accepted = true;
          break;
        }
        // Quadratic-interpolation backtracking (safeguarded into [t/10, t/2]).
        double tq = 0.5 * t;
        if (std::isfinite(fn)) {
          const double denom = 2.0 * (fn - fx - slope * t);
          if (denom > 0.0) tq = -slope * t * t / denom;
        }
        t = std::clamp(tq, 0.1 * t, 0.5 * t);
      }
      if (accepted) trial_step = std::clamp(2.0 * t, 1e-6, 1e4);
    }
    if (!accepted) {
      res.converged = true;  // no admissible decrease left at this scale
      break;
    }

    Vector gn(k);
    fn = f(xn, &gn);
    if (!std::isfinite(fn)) break;

    const Vector s = xn - res.x;
    const Vector y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (it == 0) H *= sy / y.squaredNorm();  // initial curvature scaling
      const double rho = 1.0 / sy;
      const Matrix I = Matrix::Identity(k, k);
      H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) +
          rho * s * s.transpose();
    }
    const double decrease = fx - fn;
    res.x = xn;
    fx = fn;
    g = gn;
    res.value = fx;
    if (s.lpNorm<Eigen::Infinity>() <= opt.step_tol) {
      res.converged = true;
      break;
    }
    if (decrease <= opt.f_tol * (1.0 + std::abs(fx))) {
      if (++stalls >= 2) {
        res.converged = true;
        break;
      }
    } else {
      stalls = 0;
    }
  }
  return res;
}

/// Wraps a value-only callable with central-difference gradients of step `h`.
/// Probe points may step slightly outside the box; callers must tolerate that.
template <typename V>
auto with_numeric_gradient(V value_fn, double h) {
  return [value_fn = std::move(value_fn), h](const Vector& x, Vector* grad) {
    const double fx = value_fn(x);
    if (grad) {
      Vector xp = x;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        const double fp = value_fn(xp);
        xp[i] = x[i] - h;
        const double fm = value_fn(xp);
        xp[i] = x[i];
        (*grad)[i] = (fp - fm) / (2.0 * h);
      }
    }
    return fx;
  };
}

}  // namespace treebo
