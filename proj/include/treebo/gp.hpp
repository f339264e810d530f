#pragma once

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "treebo/domain.hpp"
#include "treebo/errors.hpp"
#include "treebo/optim.hpp"
#include "treebo/rng.hpp"
#include "treebo/sampling.hpp"

namespace treebo {

enum class KernelFamily { PowerExponential, Matern52 };

inline const char* kernel_name(KernelFamily f) {
  return f == KernelFamily::PowerExponential ? "powexp" : "matern52";
}

/// Covariance hyperparameters.  `powers` is used by the power-exponential
/// family only; Matern-5/2 ignores it.
struct KernelParams {
  Vector theta;    // per-coordinate length-scales, > 0
  Vector powers;   // exponents in (0, 2]
  double variance = 1.0;  // process variance sigma^2
  KernelFamily family = KernelFamily::PowerExponential;

  void validate(int dim) const {
    if (theta.size() != dim) throw ArgumentError("kernel theta has wrong dimension");
    if ((theta.array() <= 0.0).any()) throw ArgumentError("kernel theta must be positive");
    if (!(variance > 0.0)) throw ArgumentError("kernel variance must be positive");
    if (family == KernelFamily::PowerExponential) {
      if (powers.size() != dim) throw ArgumentError("kernel powers have wrong dimension");
      if ((powers.array() <= 0.0).any() || (powers.array() > 2.0).any())
        throw ArgumentError("kernel powers must lie in (0, 2]");
    }
  }
};

/// Covariance between two points.
inline double kernel_value(const KernelParams& p, const Vector& x, const Vector& y) {
  if (x.size() != y.size() || x.size() != p.theta.size())
    throw ArgumentError("kernel_value: dimension mismatch");
  if (p.family == KernelFamily::PowerExponential) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j)
      s += std::pow(std::abs(x[j] - y[j]), p.powers[j]) / p.theta[j];
    return p.variance * std::exp(-s);
  }
  double r2 = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double t = (x[j] - y[j]) / p.theta[j];
    r2 += t * t;
  }
  const double r = std::sqrt(r2);
  const double sr = std::sqrt(5.0) * r;
  return p.variance * (1.0 + sr + 5.0 * r2 / 3.0) * std::exp(-sr);
}

namespace detail {

// Per-dimension pairwise structure reused across likelihood evaluations on a
// fixed design.
struct PairCache {
  int n = 0;
  int d = 0;
  KernelFamily family = KernelFamily::PowerExponential;
  std::vector<Eigen::ArrayXXd> logabs;  // log|dx_j|, -inf at coincident coords
  std::vector<Eigen::ArrayXXd> sq;      // dx_j^2

  static PairCache build(const Matrix& x, KernelFamily family) {
    PairCache pc;
    pc.n = static_cast<int>(x.rows());
    pc.d = static_cast<int>(x.cols());
    pc.family = family;
    for (int j = 0; j < pc.d; ++j) {
      Eigen::ArrayXXd diff =
          (x.col(j).replicate(1, pc.n) - x.col(j).transpose().replicate(pc.n, 1)).array().abs();
      if (family == KernelFamily::PowerExponential)
        pc.logabs.push_back(diff.log());
      else
        pc.sq.push_back(diff.square());
    }
    return pc;
  }
};

// Kernel matrix (no jitter).  For the power-exponential family the per-dim
// weight arrays w_j = |dx_j|^{p_j} / theta_j are optionally exported for
// gradient reuse.
inline Eigen::ArrayXXd kernel_matrix(const PairCache& pc, const KernelParams& p,
                                     std::vector<Eigen::ArrayXXd>* weights = nullptr,
                                     Eigen::ArrayXXd* r_out = nullptr) {
  if (pc.family == KernelFamily::PowerExponential) {
    Eigen::ArrayXXd s = Eigen::ArrayXXd::Zero(pc.n, pc.n);
    for (int j = 0; j < pc.d; ++j) {
      Eigen::ArrayXXd w = (p.powers[j] * pc.logabs[j]).exp() / p.theta[j];
      s += w;
      if (weights) weights->push_back(std::move(w));
    }
    return p.variance * (-s).exp();
  }
  Eigen::ArrayXXd r2 = Eigen::ArrayXXd::Zero(pc.n, pc.n);
  for (int j = 0; j < pc.d; ++j) r2 += pc.sq[j] / (p.theta[j] * p.theta[j]);
  Eigen::ArrayXXd r = r2.sqrt();
  if (r_out) *r_out = r;
  const double s5 = std::sqrt(5.0);
  return p.variance * (1.0 + s5 * r + (5.0 / 3.0) * r2) * (-s5 * r).exp();
}

struct Factorization {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
};

// Cholesky of K + jitter*I, escalating jitter from 1e-10*sigma^2 by factors of
// 10 up to 1e-4*sigma^2.
inline Factorization cholesky_with_jitter(const Matrix& k, double variance) {
  if (!k.allFinite()) throw NumericalError("kernel matrix contains non-finite entries");
  Factorization out;
  for (double factor = 1e-10; factor <= 1.0000001e-4; factor *= 10.0) {
    const double jitter = factor * variance;
    Matrix kj = k;
    kj.diagonal().array() += jitter;
    out.llt.compute(kj);
    if (out.llt.info() == Eigen::Success &&
        out.llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      out.jitter = jitter;
      return out;
    }
  }
  std::ostringstream msg;
  msg << "kernel matrix factorization failed after jitter ladder (n=" << k.rows()
      << ", sigma2=" << variance << ", diag range [" << k.diagonal().minCoeff() << ", "
      << k.diagonal().maxCoeff() << "])";
  throw NumericalError(msg.str());
}

// log det + quadratic form of the centered responses, given a factorization.
inline double nll_core(const Eigen::LLT<Matrix>& llt, const Vector& f_tilde) {
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return logdet + f_tilde.dot(llt.solve(f_tilde));
}

struct TrendSolve {
  double trend = 0.0;
  Vector alpha;    // (K+jI)^{-1} (f - trend 1)
  double quad = 0.0;  // (f - trend 1)' (K+jI)^{-1} (f - trend 1)
};

// Generalized-least-squares constant trend and the associated solves.
inline TrendSolve solve_with_trend(const Eigen::LLT<Matrix>& llt, const Vector& f) {
  const Eigen::Index n = f.size();
  const Vector a = llt.solve(f);
  const Vector u = llt.solve(Vector::Ones(n));
  const double su = u.sum();
  TrendSolve out;
  out.trend = a.sum() / su;
  out.alpha = a - out.trend * u;
  out.quad = f.dot(a) - a.sum() * a.sum() / su;
  return out;
}

}  // namespace detail

struct NllDetail {
  double value = 0.0;
  double jitter = 0.0;
  double trend = 0.0;
};

/// Twice the negative Gaussian log-likelihood (up to an additive constant):
/// log det K + f~' K^{-1} f~ with f~ the responses minus the GLS constant
/// trend, computed through the jittered triangular factor.
inline NllDetail nll_detail(const KernelParams& params, const Matrix& x, const Vector& f) {
  if (x.rows() != f.size()) throw ArgumentError("nll: row count mismatch");
  if (x.rows() < 2) throw ArgumentError("nll requires at least 2 points");
  params.validate(static_cast<int>(x.cols()));
  const auto pc = detail::PairCache::build(x, params.family);
  const Matrix k = detail::kernel_matrix(pc, params).matrix();
  const auto fac = detail::cholesky_with_jitter(k, params.variance);
  const auto ts = detail::solve_with_trend(fac.llt, f);
  const double logdet = 2.0 * fac.llt.matrixLLT().diagonal().array().log().sum();
  return NllDetail{logdet + ts.quad, fac.jitter, ts.trend};
}

inline double neg_log_likelihood(const KernelParams& params, const Dataset& data) {
  return nll_detail(params, data.x, data.f).value;
}

/// Fitted Gaussian-process surrogate.  Immutable once built; prediction uses
/// the precomputed factor and solved coefficients.
class GpModel {
 public:
  GpModel(KernelParams params, Matrix x, Vector f, Eigen::LLT<Matrix> llt, double jitter,
          double trend, Vector alpha, double nll)
      : params_(std::move(params)),
        x_(std::move(x)),
        f_(std::move(f)),
        llt_(std::move(llt)),
        jitter_(jitter),
        trend_(trend),
        alpha_(std::move(alpha)),
        nll_(nll) {}

  const KernelParams& params() const { return params_; }
  const Matrix& train_x() const { return x_; }
  const Vector& train_f() const { return f_; }
  int train_size() const { return static_cast<int>(x_.rows()); }
  int dim() const { return static_cast<int>(x_.cols()); }
  double trend() const { return trend_; }
  double jitter() const { return jitter_; }
  double nll() const { return nll_; }

  /// Conditional mean and variance at x (variance clamped at 0 from below).
  std::pair<double, double> predict(const Vector& x) const {
    const Vector k = cross_covariance(x);
    const double mean = trend_ + k.dot(alpha_);
    const Vector v = llt_.matrixL().solve(k);
    const double var = params_.variance - v.squaredNorm();
    return {mean, std::max(var, 0.0)};
  }

 private:
  Vector cross_covariance(const Vector& x) const {
    if (x.size() != x_.cols()) throw ArgumentError("predict: dimension mismatch");
    const Eigen::Index n = x_.rows();
    if (params_.family == KernelFamily::PowerExponential) {
      Eigen::ArrayXd s = Eigen::ArrayXd::Zero(n);
      for (Eigen::Index j = 0; j < x_.cols(); ++j) {
        Eigen::ArrayXd t = (x_.col(j).array() - x[j]).abs();
        s += (params_.powers[j] * t.log()).exp() / params_.theta[j];
      }
      return (params_.variance * (-s).exp()).matrix();
    }
    Eigen::ArrayXd r2 = Eigen::ArrayXd::Zero(n);
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      Eigen::ArrayXd t = (x_.col(j).array() - x[j]) / params_.theta[j];
      r2 += t.square();
    }
    Eigen::ArrayXd r = r2.sqrt();
    const double s5 = std::sqrt(5.0);
    return (params_.variance * (1.0 + s5 * r + (5.0 / 3.0) * r2) * (-s5 * r).exp()).matrix();
  }

  KernelParams params_;
  Matrix x_;
  Vector f_;
  Eigen::LLT<Matrix> llt_;
  double jitter_;
  double trend_;
  Vector alpha_;
  double nll_;
};

/// Builds a model at fixed hyperparameters (factorization + trend solve).
inline GpModel make_gp_model(const KernelParams& params, Dataset data) {
  params.validate(data.dim());
  if (data.size() < 1) throw ArgumentError("make_gp_model: empty dataset");
  const auto pc = detail::PairCache::build(data.x, params.family);
  const Matrix k = detail::kernel_matrix(pc, params).matrix();
  auto fac = detail::cholesky_with_jitter(k, params.variance);
  double trend, nllval;
  Vector alpha;
  if (data.size() >= 2) {
    auto ts = detail::solve_with_trend(fac.llt, data.f);
    trend = ts.trend;
    alpha = std::move(ts.alpha);
    const double logdet = 2.0 * fac.llt.matrixLLT().diagonal().array().log().sum();
    nllval = logdet + ts.quad;
  } else {
    trend = data.f[0];  // single observation: the GLS constant is the value itself
    alpha = fac.llt.solve(data.f - Vector::Constant(1, trend));
    nllval = 2.0 * fac.llt.matrixLLT().diagonal().array().log().sum();
  }
  return GpModel(params, std::move(data.x), std::move(data.f), std::move(fac.llt), fac.jitter,
                 trend, std::move(alpha), nllval);
}

struct FitOptions {
  int multistarts = 5;
  int max_iterations = 35;      // quasi-Newton budget per start
  int refine_iterations = 90;   // extra budget continuing the best start
  double grad_tol = 1e-5;
  double theta_lower = 1e-3;  // normalized inputs
  double theta_upper = 10.0;
  double power_lower = 0.1;   // numeric stand-in for the open bound at 0
  double power_upper = 2.0;
  double variance_lower_rel = 1e-6;  // times var(f)
  double variance_upper_rel = 1e3;
};

namespace detail {

// Optimizer coordinates: [log theta_1..d, (powers_1..d), log sigma^2].
inline KernelParams params_from_coords(const Vector& z, int d, KernelFamily family) {
  KernelParams p;
  p.family = family;
  p.theta = z.head(d).array().exp().matrix();
  if (family == KernelFamily::PowerExponential) {
    p.powers = z.segment(d, d);
    p.variance = std::exp(z[2 * d]);
  } else {
    p.powers = Vector::Constant(d, 2.0);
    p.variance = std::exp(z[d]);
  }
  return p;
}

// Cached products of one likelihood evaluation, reused by the gradient stage
// when the optimizer accepts the point.
struct NllWorkspace {
  Vector z;
  bool valid = false;
  KernelParams params;
  Eigen::ArrayXXd karr;
  Eigen::ArrayXXd r;  // Matern only
  Factorization fac;
  TrendSolve ts;
  double value = std::numeric_limits<double>::infinity();
};

inline double nll_eval(const PairCache& pc, const Vector& f, const Vector& z,
                       KernelFamily family, NllWorkspace& ws) {
  ws.z = z;
  ws.valid = true;
  ws.value = std::numeric_limits<double>::infinity();
  ws.params = params_from_coords(z, pc.d, family);
  ws.karr = kernel_matrix(pc, ws.params, nullptr,
                          family == KernelFamily::Matern52 ? &ws.r : nullptr);
  try {
    ws.fac = cholesky_with_jitter(ws.karr.matrix(), ws.params.variance);
  } catch (const NumericalError&) {
    return ws.value;  // +inf: infeasible point for the optimizer
  }
  ws.ts = solve_with_trend(ws.fac.llt, f);
  const double logdet = 2.0 * ws.fac.llt.matrixLLT().diagonal().array().log().sum();
  ws.value = logdet + ws.ts.quad;
  return ws.value;
}

// Analytic gradient of the profiled NLL in optimizer coordinates, from a
// valid workspace.  The diagonal jitter is proportional to sigma^2, so
// d(K+jI)/dlog sigma^2 is the full jittered matrix and that component reduces
// to n minus the quadratic form.
inline Vector nll_grad(const PairCache& pc, const Vector& f, const NllWorkspace& ws,
                       KernelFamily family) {
  const int d = pc.d;
  const int k = family == KernelFamily::PowerExponential ? 2 * d + 1 : d + 1;
  Vector grad = Vector::Zero(k);
  const Eigen::Index n = f.size();
  const Matrix kinv = ws.fac.llt.solve(Matrix::Identity(n, n));
  const Eigen::ArrayXXd m = (kinv - ws.ts.alpha * ws.ts.alpha.transpose()).array();

  if (family == KernelFamily::PowerExponential) {
    for (int j = 0; j < d; ++j) {
      const Eigen::ArrayXXd w = (ws.params.powers[j] * pc.logabs[j]).exp() / ws.params.theta[j];
      // d(K)/dlog theta_j = K .* w_j
      grad[j] = (m * (ws.karr * w)).sum();
      // d(K)/dp_j = -K .* w_j .* log|dx_j|  (zero where coordinates coincide)
      const Eigen::ArrayXXd wl =
          pc.logabs[j].isFinite().select(w * pc.logabs[j], Eigen::ArrayXXd::Zero(n, n));
      grad[d + j] = -(m * (ws.karr * wl)).sum();
    }
    grad[2 * d] = static_cast<double>(n) - ws.ts.quad;
  } else {
    const double s5 = std::sqrt(5.0);
    // dK/dlog theta_j = (5 sigma^2 / 3)(1 + sqrt5 r) exp(-sqrt5 r) dx_j^2 / theta_j^2
    const Eigen::ArrayXXd e =
        (5.0 * ws.params.variance / 3.0) * (1.0 + s5 * ws.r) * (-s5 * ws.r).exp();
    for (int j = 0; j < d; ++j)
      grad[j] = (m * (e * pc.sq[j] / (ws.params.theta[j] * ws.params.theta[j]))).sum();
    grad[d] = static_cast<double>(n) - ws.ts.quad;
  }
  return grad;
}

struct NllGradResult {
  double value = std::numeric_limits<double>::infinity();
  Vector grad;
};

inline NllGradResult nll_value_grad(const PairCache& pc, const Vector& f, const Vector& z,
                                    KernelFamily family, bool want_grad) {
  NllWorkspace ws;
  NllGradResult out;
  out.value = nll_eval(pc, f, z, family, ws);
  const int k = family == KernelFamily::PowerExponential ? 2 * pc.d + 1 : pc.d + 1;
  out.grad = Vector::Zero(k);
  if (want_grad && std::isfinite(out.value)) out.grad = nll_grad(pc, f, ws, family);
  return out;
}

}  // namespace detail

/// Fits kernel hyperparameters by multi-start bounded quasi-Newton
/// minimization of the negative log-likelihood in log-parameter space, with
/// analytic gradients.  Starts come from a Latin hypercube over the search
/// box; power exponents are initialized at 2.  Best final value wins, ties
/// broken by start index.
inline GpModel fit_gp(const Dataset& data, KernelFamily family, RngStream& rng,
                      const FitOptions& opt = {}) {
  const int n = static_cast<int>(data.size());
  const int d = data.dim();
  if (n < 2) throw ArgumentError("fit_gp requires at least 2 points");

  const auto pc = detail::PairCache::build(data.x, family);
  const double mean_f = data.f.mean();
  const double var_f =
      std::max((data.f.array() - mean_f).square().sum() / static_cast<double>(n), 1e-12);

  const bool powexp = family == KernelFamily::PowerExponential;
  const int k = powexp ? 2 * d + 1 : d + 1;
  Vector lo(k), hi(k);
  lo.head(d).setConstant(std::log(opt.theta_lower));
  hi.head(d).setConstant(std::log(opt.theta_upper));
  if (powexp) {
    lo.segment(d, d).setConstant(opt.power_lower);
    hi.segment(d, d).setConstant(opt.power_upper);
  }
  lo[k - 1] = std::log(opt.variance_lower_rel * var_f);
  hi[k - 1] = std::log(opt.variance_upper_rel * var_f);

  // Space-filling starts over (log theta, log sigma^2); powers start at 2.
  // The search runs in box-normalized coordinates so the quasi-Newton scale
  // is comparable across parameter types.
  const Matrix design = lhs_unit(opt.multistarts, d + 1, rng);
  const Vector span = hi - lo;
  detail::NllWorkspace ws;  // the gradient stage reuses the value-stage factorization
  auto objective = [&](const Vector& u, Vector* grad) {
    const Vector z = lo + u.cwiseProduct(span);
    if (!ws.valid || ws.z.size() != z.size() || !(ws.z.array() == z.array()).all())
      detail::nll_eval(pc, data.f, z, family, ws);
    if (grad) {
      if (std::isfinite(ws.value))
        *grad = detail::nll_grad(pc, data.f, ws, family).cwiseProduct(span);
      else
        grad->setZero();
    }
    return ws.value;
  };

  std::optional<BoxMinResult> best;
  for (int s = 0; s < opt.multistarts; ++s) {
    Vector u0(k);
    for (int j = 0; j < d; ++j) u0[j] = design(s, j);
    if (powexp)
      u0.segment(d, d) = (Vector::Constant(d, 2.0) - lo.segment(d, d))
                             .cwiseQuotient(span.segment(d, d));
    u0[k - 1] = design(s, d);

    BoxMinOptions bopt;
    bopt.max_iterations = opt.max_iterations;
    bopt.grad_tol = opt.grad_tol;
    auto res = minimize_box(objective, u0, Vector::Zero(k), Vector::Ones(k), bopt);
    if (!std::isfinite(res.value)) continue;
    if (!best || res.value < best->value) best = std::move(res);
  }
  if (!best) throw FitError("fit_gp: all multistarts failed to factorize");

  if (!best->converged && opt.refine_iterations > 0) {
    BoxMinOptions bopt;
    bopt.max_iterations = opt.refine_iterations;
    bopt.grad_tol = opt.grad_tol;
    auto res = minimize_box(objective, best->x, Vector::Zero(k), Vector::Ones(k), bopt);
    if (std::isfinite(res.value) && res.value < best->value) best = std::move(res);
  }

  return make_gp_model(detail::params_from_coords(lo + best->x.cwiseProduct(span), d, family),
                       data);
}

}  // namespace treebo
