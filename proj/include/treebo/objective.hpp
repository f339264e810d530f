#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "treebo/domain.hpp"
#include "treebo/errors.hpp"
#include "treebo/test_functions.hpp"

namespace treebo {

/// Evaluation interface for objective functions.
///
/// All optimization internals operate on points in the unit cube; the
/// objective owns the affine map to native bounds.  Out-of-domain inputs
/// error rather than clamp.
class Objective {
 public:
  using Fn = std::function<double(const Vector&)>;

  Objective(Domain domain, Fn fn, std::string name = "objective")
      : domain_(std::move(domain)),
        fn_(std::move(fn)),
        name_(std::move(name)),
        count_(std::make_shared<std::atomic<long long>>(0)) {}

  const Domain& domain() const { return domain_; }
  int dim() const { return domain_.dim(); }
  const std::string& name() const { return name_; }

  /// Evaluate at a native-coordinate point.
  double eval(const Vector& x) const {
    if (x.size() != domain_.dim())
      throw ArgumentError("objective '" + name_ + "': point dimension mismatch");
    if (!domain_.contains(x))
      throw DomainViolation("objective '" + name_ + "': point outside domain");
    count_->fetch_add(1, std::memory_order_relaxed);
    return fn_(x);
  }

  /// Evaluate at a unit-cube point.
  double eval_unit(const Vector& u) const { return eval(domain_.to_native(u)); }

  long long eval_count() const { return count_->load(std::memory_order_relaxed); }

 private:
  Domain domain_;
  Fn fn_;
  std::string name_;
  mutable std::shared_ptr<std::atomic<long long>> count_;
};

struct PenalizedValue {
  double value = 0.0;          // g(x) plus the squared positive violations
  int violation_count = 0;     // number of constraints with h_i(x) > 0
  double violation_sq_sum = 0.0;
};

/// Raw objective g plus inequality constraints h_i; the penalized composition
/// is g(x) + sum of h_i(x)^2 over exactly the h_i(x) > 0.  Strict inequality:
/// h_i = 0 counts as feasible.
struct ConstrainedObjective {
  Domain domain;
  Objective::Fn base;
  std::vector<Objective::Fn> constraints;

  int constraint_count() const { return static_cast<int>(constraints.size()); }
};

inline PenalizedValue penalize(const ConstrainedObjective& c, const Vector& x) {
  PenalizedValue out;
  out.value = c.base(x);
  for (const auto& h : c.constraints) {
    const double hi = h(x);
    if (hi > 0.0) {
      ++out.violation_count;
      out.violation_sq_sum += hi * hi;
    }
  }
  out.value += out.violation_sq_sum;
  return out;
}

inline PenalizedValue penalize_values(double g, const std::vector<double>& h) {
  PenalizedValue out;
  out.value = g;
  for (double hi : h) {
    if (hi > 0.0) {
      ++out.violation_count;
      out.violation_sq_sum += hi * hi;
    }
  }
  out.value += out.violation_sq_sum;
  return out;
}

/// Wraps a constrained objective into the plain evaluation interface.  The
/// most recent violation statistics are kept for reporting.
inline Objective make_penalized_objective(ConstrainedObjective c, std::string name,
                                          std::shared_ptr<PenalizedValue> last_stats = nullptr) {
  Domain domain = c.domain;
  auto shared = std::make_shared<ConstrainedObjective>(std::move(c));
  auto fn = [shared, last_stats](const Vector& x) {
    PenalizedValue v = penalize(*shared, x);
    if (last_stats) *last_stats = v;
    return v.value;
  };
  return Objective(std::move(domain), std::move(fn), std::move(name));
}

/// Builds one of the analytic test objectives by name.
inline Objective make_objective(const std::string& name, int dim) {
  if (name == "ackley") return Objective(funcs::ackley_domain(dim), funcs::ackley, name);
  if (name == "hartmann6") {
    if (dim != 6) throw ArgumentError("hartmann6 is defined for d = 6 only");
    return Objective(funcs::hartmann6_domain(), funcs::hartmann6, name);
  }
  if (name == "rastrigin") return Objective(funcs::rastrigin_domain(dim), funcs::rastrigin, name);
  if (name == "schwefel") return Objective(funcs::schwefel_domain(dim), funcs::schwefel, name);
  if (name == "levy") return Objective(funcs::levy_domain(dim), funcs::levy, name);
  if (name == "michalewicz")
    return Objective(funcs::michalewicz_domain(dim), funcs::michalewicz, name);
  throw ArgumentError("unknown objective '" + name + "'");
}

}  // namespace treebo
