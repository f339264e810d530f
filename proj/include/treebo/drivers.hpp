#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "treebo/objective.hpp"
#include "treebo/tree.hpp"

namespace treebo {

enum class Method { TreeBo, Standard };

inline const char* method_name(Method m) { return m == Method::TreeBo ? "treebo" : "standard"; }

struct RunConfig {
  Method method = Method::TreeBo;
  std::string objective = "ackley";
  int dim = 6;
  int n_init = 0;
  int n_node = 0;
  int n_total = 0;
  KernelFamily kernel = KernelFamily::PowerExponential;
  std::uint64_t seed = 0;
  TreeOptions tree_options{};

  void validate() const {
    if (n_init < 1 || !(n_init <= n_node && n_node < n_total))
      throw ArgumentError("run config requires 1 <= n_init <= n_node < n_total");
    if (dim < 1) throw ArgumentError("run config requires dim >= 1");
  }
};

struct RunRow {
  int iter = 0;               // subsequent-observation index, 0-based
  Vector x_native;            // evaluated point in native coordinates
  double f = 0.0;
  double best_so_far = 0.0;
  std::string leaf_path = "0";
  double wall_ms = 0.0;
  int gp_train_size = 0;      // training size of the GP that selected this point
  bool penalty_selected = false;
  bool split_attempted = false;
  bool split_succeeded = false;
};

struct FitEvent {
  int iter = -1;  // -1 for the pre-loop root initialization
  std::string path;
  int size = 0;
};

struct RunRecord {
  RunConfig cfg;
  double init_best = 0.0;
  std::vector<RunRow> rows;
  std::vector<FitEvent> fits;  // every GP fit performed, in order
  bool completed = false;
  std::string error;
  std::string tree_snapshot;

  double final_best() const { return rows.empty() ? init_best : rows.back().best_so_far; }
};

/// Leaf with the maximal stored acquisition value; ties break to the
/// lexicographically smallest path.  Errors out when every leaf is unfit.
inline Path select_leaf(const Tree& tree) {
  const std::string* best = nullptr;
  double best_value = -std::numeric_limits<double>::infinity();
  for (const auto& s : tree.leaf_paths()) {  // set order is lexicographic: first max wins ties
    const double v = tree.node(Path::parse(s)).acq_value;
    if (v > best_value) {
      best_value = v;
      best = &s;
    }
  }
  if (best == nullptr || !std::isfinite(best_value))
    throw FitError("select_leaf: every leaf surrogate failed (all acquisition values -inf)");
  return Path::parse(*best);
}

/// A failed split is retried only after new data reaches the node.
inline bool should_attempt_split(const TreeNode& node, int n_node) {
  if (node.data.size() < static_cast<std::size_t>(n_node)) return false;
  return !node.split_failed || node.data.size() > node.split_failed_at_size;
}

namespace detail {

inline double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Nudges a candidate away from an exact duplicate of an existing observation
// (duplicate rows break the GP factorization).
inline Vector dedupe_point(const Tree& tree, Vector x, RngStream& perturb_rng) {
  bool duplicate = false;
  for (int i = 0; i < tree.observation_count(); ++i) {
    if ((tree.obs_x(i) - x).lpNorm<Eigen::Infinity>() <= 1e-10) {
      duplicate = true;
      break;
    }
  }
  if (duplicate) {
    for (Eigen::Index j = 0; j < x.size(); ++j)
      x[j] = std::clamp(x[j] + perturb_rng.uniform(-1e-6, 1e-6), 0.0, 1.0);
  }
  return x;
}

inline bool evaluate_init(const Objective& obj, const Matrix& init_unit, Tree& tree,
                          RunRecord& record) {
  for (Eigen::Index i = 0; i < init_unit.rows(); ++i) {
    double f;
    try {
      f = obj.eval_unit(init_unit.row(i).transpose());
    } catch (const Error& e) {
      record.completed = false;
      record.error = std::string("initial design evaluation failed: ") + e.what();
      return false;
    }
    const int idx = tree.add_observation(init_unit.row(i).transpose(), f);
    tree.node(Path::root()).data.push_back(idx);
  }
  record.init_best = tree.global_min();
  return true;
}

}  // namespace detail

/// The partitioned optimization loop: initialize the root, then repeatedly
/// select the leaf with the highest acquisition maximum, observe there, and
/// either split the leaf (once it holds n_node points) or refresh it.
inline RunRecord run_treebo(const RunConfig& cfg, const Objective& obj, const Matrix& init_unit) {
  cfg.validate();
  if (init_unit.rows() != cfg.n_init || init_unit.cols() != cfg.dim)
    throw ArgumentError("run_treebo: init design must be n_init x dim");

  RunRecord record;
  record.cfg = cfg;
  RunStreams streams(cfg.seed);
  Tree tree(cfg.dim, cfg.n_node, cfg.tree_options);

  if (!detail::evaluate_init(obj, init_unit, tree, record)) return record;

  double f_min = tree.global_min();
  {
    const int size = update_node(tree, Path::root(), f_min, cfg.kernel, streams.gp_fit,
                                 streams.swarm);
    record.fits.push_back({-1, Path::root().str(), size < 0 ? 0 : size});
  }

  int n = cfg.n_init;
  while (n < cfg.n_total) {
    const double t0 = detail::now_ms();
    RunRow row;
    row.iter = n - cfg.n_init;

    Path p = Path::root();
    try {
      p = select_leaf(tree);
    } catch (const Error& e) {
      record.completed = false;
      record.error = e.what();
      break;
    }
    TreeNode& chosen = tree.node(p);
    row.leaf_path = p.str();
    row.gp_train_size = chosen.gp_train_size;
    row.penalty_selected = chosen.acq_value < 0.0;

    Vector x_star = detail::dedupe_point(tree, chosen.acq->x_star, streams.perturbation);
    row.x_native = obj.domain().to_native(x_star);
    try {
      row.f = obj.eval(row.x_native);
    } catch (const Error& e) {
      record.completed = false;
      record.error = std::string("objective evaluation failed: ") + e.what();
      break;
    }

    const int idx = tree.add_observation(x_star, row.f);
    chosen.data.push_back(idx);
    ++n;
    f_min = std::min(f_min, row.f);
    row.best_so_far = f_min;

    if (n < cfg.n_total) {
      if (should_attempt_split(chosen, cfg.n_node)) {
        row.split_attempted = true;
        const SplitOutcome outcome = split_node(tree, p, streams.pam, streams.svm_cv);
        if (outcome.succeeded) {
          row.split_succeeded = true;
          const int s1 = update_node(tree, outcome.child1, f_min, cfg.kernel, streams.gp_fit,
                                     streams.swarm);
          record.fits.push_back({row.iter, outcome.child1.str(), s1 < 0 ? 0 : s1});
          const int s2 = update_node(tree, outcome.child2, f_min, cfg.kernel, streams.gp_fit,
                                     streams.swarm);
          record.fits.push_back({row.iter, outcome.child2.str(), s2 < 0 ? 0 : s2});
        } else {
          const int s = update_node(tree, p, f_min, cfg.kernel, streams.gp_fit, streams.swarm);
          record.fits.push_back({row.iter, p.str(), s < 0 ? 0 : s});
        }
      } else {
        const int s = update_node(tree, p, f_min, cfg.kernel, streams.gp_fit, streams.swarm);
        record.fits.push_back({row.iter, p.str(), s < 0 ? 0 : s});
      }
    }

    row.wall_ms = detail::now_ms() - t0;
    record.rows.push_back(std::move(row));
  }

  if (record.error.empty()) record.completed = true;
  record.tree_snapshot = tree.snapshot();
  return record;
}

/// Standard Bayesian optimization baseline sharing the GP/EI stack: one global
/// surrogate over all data, unpenalized expected improvement over the full
/// box, same swarm maximizer and gap-based starts.
inline RunRecord run_standard(const RunConfig& cfg, const Objective& obj,
                              const Matrix& init_unit) {
  cfg.validate();
  if (init_unit.rows() != cfg.n_init || init_unit.cols() != cfg.dim)
    throw ArgumentError("run_standard: init design must be n_init x dim");

  RunRecord record;
  record.cfg = cfg;
  RunStreams streams(cfg.seed);

  Dataset data;
  data.x.resize(0, cfg.dim);
  double f_min = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < init_unit.rows(); ++i) {
    double f;
    try {
      f = obj.eval_unit(init_unit.row(i).transpose());
    } catch (const Error& e) {
      record.completed = false;
      record.error = std::string("initial design evaluation failed: ") + e.what();
      return record;
    }
    data.append(init_unit.row(i).transpose(), f);
    f_min = std::min(f_min, f);
  }
  record.init_best = f_min;

  int n = cfg.n_init;
  while (n < cfg.n_total) {
    const double t0 = detail::now_ms();
    RunRow row;
    row.iter = n - cfg.n_init;
    row.leaf_path = "0";
    row.gp_train_size = static_cast<int>(data.size());

    std::optional<GpModel> model;
    try {
      model = fit_gp(data, cfg.kernel, streams.gp_fit);
    } catch (const Error& e) {
      record.completed = false;
      record.error = std::string("GP fit failed: ") + e.what();
      break;
    }
    record.fits.push_back({row.iter, "0", model->train_size()});

    AcquisitionContext ctx{&*model, f_min, nullptr, cfg.dim};
    const Matrix starts = gen_acq_points(data.x, streams.swarm);
    const AcqResult acq = maximize_acquisition(ctx, starts, streams.swarm);

    Vector x_star = acq.x_star;
    {
      bool duplicate = false;
      for (Eigen::Index i = 0; i < data.x.rows(); ++i)
        if ((data.x.row(i).transpose() - x_star).lpNorm<Eigen::Infinity>() <= 1e-10)
          duplicate = true;
      if (duplicate)
        for (Eigen::Index j = 0; j < x_star.size(); ++j)
          x_star[j] = std::clamp(x_star[j] + streams.perturbation.uniform(-1e-6, 1e-6), 0.0, 1.0);
    }

    row.x_native = obj.domain().to_native(x_star);
    try {
      row.f = obj.eval(row.x_native);
    } catch (const Error& e) {
      record.completed = false;
      record.error = std::string("objective evaluation failed: ") + e.what();
      break;
    }
    data.append(x_star, row.f);
    ++n;
    f_min = std::min(f_min, row.f);
    row.best_so_far = f_min;
    row.wall_ms = detail::now_ms() - t0;
    record.rows.push_back(std::move(row));
  }

  if (record.error.empty()) record.completed = true;
  return record;
}

inline RunRecord run_method(const RunConfig& cfg, const Objective& obj, const Matrix& init_unit) {
  return cfg.method == Method::TreeBo ? run_treebo(cfg, obj, init_unit)
                                      : run_standard(cfg, obj, init_unit);
}

}  // namespace treebo
