#pragma once

#include <Eigen/Dense>

#include "treebo/errors.hpp"

namespace treebo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Axis-aligned box of admissible inputs.
struct Domain {
  Vector lower;
  Vector upper;

  Domain() = default;
  Domain(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() != upper.size() || lower.size() == 0)
      throw ArgumentError("domain bound vectors must have matching positive length");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      if (!(lower[i] < upper[i]))
        throw ArgumentError("domain requires lower[i] < upper[i]");
  }

  static Domain hypercube(int dim, double lo, double hi) {
    return Domain(Vector::Constant(dim, lo), Vector::Constant(dim, hi));
  }

  static Domain unit(int dim) { return hypercube(dim, 0.0, 1.0); }

  int dim() const { return static_cast<int>(lower.size()); }

  bool contains(const Vector& x) const {
    if (x.size() != lower.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double slack = 1e-12 * (upper[i] - lower[i]);
      if (x[i] < lower[i] - slack || x[i] > upper[i] + slack) return false;
    }
    return true;
  }

  /// Affine map from the unit cube; exact at both endpoints.
  Vector to_native(const Vector& u) const {
    Vector x(lower.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
      x[i] = lower[i] * (1.0 - u[i]) + upper[i] * u[i];
    return x;
  }

  Vector to_unit(const Vector& x) const {
    Vector u(lower.size());
    for (Eigen::Index i = 0; i < u.size(); ++i)
      u[i] = (x[i] - lower[i]) / (upper[i] - lower[i]);
    return u;
  }
};

/// Ordered (x, f(x)) pairs; rows of x are points.
struct Dataset {
  Matrix x;  // n x d
  Vector f;  // n

  Dataset() : x(0, 0), f(0) {}
  Dataset(Matrix xs, Vector fs) : x(std::move(xs)), f(std::move(fs)) {
    if (x.rows() != f.size()) throw ArgumentError("dataset row count mismatch");
  }

  Eigen::Index size() const { return x.rows(); }
  int dim() const { return static_cast<int>(x.cols()); }

  void append(const Vector& xi, double fi) {
    if (x.rows() == 0 && x.cols() == 0) x.resize(0, xi.size());
    if (xi.size() != x.cols()) throw ArgumentError("appended point has wrong dimension");
    x.conservativeResize(x.rows() + 1, Eigen::NoChange);
    x.row(x.rows() - 1) = xi.transpose();
    f.conservativeResize(f.size() + 1);
    f[f.size() - 1] = fi;
  }
};

}  // namespace treebo
