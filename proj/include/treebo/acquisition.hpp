#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "treebo/gp.hpp"
#include "treebo/optim.hpp"
#include "treebo/partition.hpp"
#include "treebo/rng.hpp"

namespace treebo {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }
inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

/// Closed-form expected improvement E[max(f_min - Y, 0)] for Y ~ N(mean, sd^2).
/// Degenerates to max(f_min - mean, 0) at sd = 0.
inline double ei_closed_form(double f_min, double mean, double sd) {
  const double delta = f_min - mean;
  if (sd <= 0.0) return std::max(delta, 0.0);
  const double z = delta / sd;
  return std::max(delta * normal_cdf(z) + sd * normal_pdf(z), 0.0);
}

inline double expected_improvement(const GpModel& model, double f_min, const Vector& x) {
  const auto [mean, var] = model.predict(x);
  return ei_closed_form(f_min, mean, std::sqrt(var));
}

/// Everything a node's acquisition needs: its surrogate, the global best
/// observed value, and the classifier chain defining its subregion.  The
/// search box is the unit cube.
struct AcquisitionContext {
  const GpModel* model = nullptr;
  double f_min = 0.0;
  const RegionChain* region = nullptr;  // null means the whole domain
  int dim = 0;
};

/// Penalized acquisition: expected improvement inside the subregion, minus the
/// "most wrong" ancestor decision value outside it.
inline double alpha(const AcquisitionContext& ctx, const Vector& x) {
  if (ctx.region != nullptr && !ctx.region->stages.empty()) {
    const Membership m = region_membership(*ctx.region, x);
    if (!m.inside) {
      double worst = 0.0;
      for (const auto& [stage, dec] : m.misclassified) worst = std::max(worst, std::abs(dec));
      return -worst;
    }
  }
  return expected_improvement(*ctx.model, ctx.f_min, x);
}

/// Start points for the acquisition maximizer, built column-wise from the
/// node's design points: sort the column, draw one uniform sample in each of
/// the n - 1 adjacent gaps, then permute the samples independently per column.
inline Matrix gen_acq_points(const Matrix& node_x, RngStream& rng) {
  const Eigen::Index n = node_x.rows();
  const Eigen::Index d = node_x.cols();
  if (n < 2) throw ArgumentError("gen_acq_points requires at least 2 node points");
  Matrix starts(n - 1, d);
  std::vector<double> col(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = node_x(i, j);
    std::sort(col.begin(), col.end());
    std::vector<double> samples(static_cast<std::size_t>(n - 1));
    for (Eigen::Index i = 0; i + 1 < n; ++i)
      samples[static_cast<std::size_t>(i)] =
          rng.uniform(col[static_cast<std::size_t>(i)], col[static_cast<std::size_t>(i + 1)]);
    const auto perm = rng.permutation(static_cast<std::size_t>(n - 1));
    for (Eigen::Index i = 0; i + 1 < n; ++i)
      starts(i, j) = samples[perm[static_cast<std::size_t>(i)]];
  }
  return starts;
}

struct AcqResult {
  Vector x_star;
  double value = -std::numeric_limits<double>::infinity();
  bool polished = false;
};

struct SwarmOptions {
  int particles = 40;
  int iterations = 200;
  double inertia = 0.7298;
  double cognitive = 1.4962;
  double social = 1.4962;
  double polish_grad_step = 1e-6;
  int polish_max_iterations = 50;
};

namespace detail {

// Reflective handling at the unit box: fold the coordinate back inside and
// reverse its velocity component.
inline void reflect_unit(double& x, double& v) {
  while (x < 0.0 || x > 1.0) {
    if (x < 0.0) x = -x;
    if (x > 1.0) x = 2.0 - x;
    v = -v;
  }
}

}  // namespace detail

/// Box-constrained particle swarm over the unit cube, seeded with the
/// provided starts, followed by one quasi-Newton polish (numeric gradients)
/// from the swarm best.  The polish is kept only when it improves, stays in
/// the box, and does not cross from objective >= 0 into negative territory;
/// a polish error falls back to the plain swarm result.  Never returns less
/// than the best provided start.
template <typename F>
AcqResult maximize_in_unit_box(F&& objective, int dim, const Matrix& starts, RngStream& rng,
                               const SwarmOptions& opt = {}) {
  const int d = dim;
  if (starts.rows() == 0 || starts.cols() != d)
    throw ArgumentError("maximize_in_unit_box: invalid start matrix");

  AcqResult best;
  best.x_star = starts.row(0).transpose();
  best.value = -std::numeric_limits<double>::infinity();
  for (Eigen::Index s = 0; s < starts.rows(); ++s) {
    const Vector x = starts.row(s).transpose();
    const double v = objective(x);
    if (v > best.value) {
      best.value = v;
      best.x_star = x;
    }
  }

  const int p = opt.particles;
  Matrix pos(p, d), vel(p, d), pbest_x(p, d);
  Vector pbest_v(p);
  for (int i = 0; i < p; ++i) {
    if (i < starts.rows()) {
      pos.row(i) = starts.row(i);
    } else {
      for (int j = 0; j < d; ++j) pos(i, j) = rng.u01();
    }
    for (int j = 0; j < d; ++j) vel(i, j) = rng.uniform(-0.25, 0.25);
    pbest_x.row(i) = pos.row(i);
    pbest_v[i] = objective(pos.row(i).transpose());
    if (pbest_v[i] > best.value) {
      best.value = pbest_v[i];
      best.x_star = pos.row(i).transpose();
    }
  }

  for (int it = 0; it < opt.iterations; ++it) {
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < d; ++j) {
        const double r1 = rng.u01();
        const double r2 = rng.u01();
        vel(i, j) = opt.inertia * vel(i, j) +
                    opt.cognitive * r1 * (pbest_x(i, j) - pos(i, j)) +
                    opt.social * r2 * (best.x_star[j] - pos(i, j));
        pos(i, j) += vel(i, j);
        detail::reflect_unit(pos(i, j), vel(i, j));
      }
      const double v = objective(pos.row(i).transpose());
      if (v > pbest_v[i]) {
        pbest_v[i] = v;
        pbest_x.row(i) = pos.row(i);
      }
      if (v > best.value) {
        best.value = v;
        best.x_star = pos.row(i).transpose();
      }
    }
  }

  // Quasi-Newton polish from the swarm best (numeric gradients).
  try {
    const Vector lo = Vector::Zero(d);
    const Vector hi = Vector::Ones(d);
    auto negated = [&](const Vector& x) { return -objective(x); };
    BoxMinOptions bopt;
    bopt.max_iterations = opt.polish_max_iterations;
    bopt.grad_tol = 1e-8;
    auto res = minimize_box(with_numeric_gradient(negated, opt.polish_grad_step), best.x_star,
                            lo, hi, bopt);
    if (std::isfinite(res.value)) {
      const double polished_value = -res.value;
      const bool crossed_out = best.value >= 0.0 && polished_value < 0.0;
      bool in_box = true;
      for (int j = 0; j < d; ++j)
        if (res.x[j] < 0.0 || res.x[j] > 1.0) in_box = false;
      if (!crossed_out && in_box && polished_value > best.value) {
        best.x_star = res.x;
        best.value = polished_value;
        best.polished = true;
      }
    }
  } catch (const std::exception&) {
    // Retry without the quasi-Newton component: keep the swarm best as-is.
  }
  return best;
}

/// Maximizes the node's penalized acquisition over the unit cube.
inline AcqResult maximize_acquisition(const AcquisitionContext& ctx, const Matrix& starts,
                                      RngStream& rng, const SwarmOptions& opt = {}) {
  return maximize_in_unit_box([&](const Vector& x) { return alpha(ctx, x); }, ctx.dim, starts,
                              rng, opt);
}

}  // namespace treebo
