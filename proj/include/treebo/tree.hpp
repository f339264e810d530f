#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "treebo/acquisition.hpp"
#include "treebo/gp.hpp"
#include "treebo/partition.hpp"

namespace treebo {

/// Path from the root: "0" followed by child symbols in {1, 2}.  String
/// comparison gives the lexicographic tie-break order used by leaf selection.
class Path {
 public:
  static Path root() { return Path("0"); }

  static Path parse(const std::string& s) {
    if (s.empty() || s[0] != '0') throw ArgumentError("path must start with 0");
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] != '1' && s[i] != '2') throw ArgumentError("path symbols after the root are 1 or 2");
    return Path(s);
  }

  Path child(int c) const {
    if (c != 1 && c != 2) throw ArgumentError("child symbol must be 1 or 2");
    return Path(s_ + static_cast<char>('0' + c));
  }

  const std::string& str() const { return s_; }
  int depth() const { return static_cast<int>(s_.size()); }
  bool is_root() const { return s_.size() == 1; }
  int symbol(int j) const { return s_[static_cast<std::size_t>(j)] - '0'; }
  Path prefix(int len) const { return Path(s_.substr(0, static_cast<std::size_t>(len))); }

  friend bool operator==(const Path& a, const Path& b) { return a.s_ == b.s_; }
  friend bool operator<(const Path& a, const Path& b) { return a.s_ < b.s_; }

 private:
  explicit Path(std::string s) : s_(std::move(s)) {}
  std::string s_;
};

/// One subregion of the domain with its data, surrogate, acquisition maximum,
/// and (once split) classifier.
struct TreeNode {
  Path path = Path::root();
  std::vector<int> data;  // global observation indices, in arrival order
  std::optional<GpModel> model;
  std::optional<AcqResult> acq;
  double acq_value = -std::numeric_limits<double>::infinity();
  int gp_train_size = 0;  // training size of the most recent fit (0 = none)
  std::shared_ptr<const SvmClassifier> classifier;  // set iff the node was split
  bool split_failed = false;
  std::size_t split_failed_at_size = 0;
  int split_attempts = 0;

  bool is_leaf() const { return classifier == nullptr; }
};

struct SplitOutcome {
  bool succeeded = false;
  Path child1 = Path::root();
  Path child2 = Path::root();
  std::string reason;  // failure reason when !succeeded
};

struct TreeOptions {
  bool refuse_small_children = true;  // refuse splits leaving a child <= d points
  bool standardize_cluster_f = true;  // standardize f before clustering in R^{d+1}
};

/// Binary partition tree over a shared observation pool (unit-cube points).
class Tree {
 public:
  Tree(int dim, int n_node, TreeOptions options = {})
      : dim_(dim), n_node_(n_node), options_(options) {
    nodes_.emplace(Path::root().str(), TreeNode{});
    leaf_paths_.insert(Path::root().str());
  }

  int dim() const { return dim_; }
  int n_node() const { return n_node_; }
  const TreeOptions& options() const { return options_; }

  int add_observation(const Vector& x_unit, double f) {
    if (x_unit.size() != dim_) throw ArgumentError("observation has wrong dimension");
    obs_x_.push_back(x_unit);
    obs_f_.push_back(f);
    return static_cast<int>(obs_x_.size()) - 1;
  }

  int observation_count() const { return static_cast<int>(obs_x_.size()); }
  const Vector& obs_x(int i) const { return obs_x_[static_cast<std::size_t>(i)]; }
  double obs_f(int i) const { return obs_f_[static_cast<std::size_t>(i)]; }

  double global_min() const {
    double m = std::numeric_limits<double>::infinity();
    for (double f : obs_f_) m = std::min(m, f);
    return m;
  }

  TreeNode& node(const Path& p) {
    auto it = nodes_.find(p.str());
    if (it == nodes_.end()) throw ArgumentError("unknown tree path " + p.str());
    return it->second;
  }
  const TreeNode& node(const Path& p) const {
    auto it = nodes_.find(p.str());
    if (it == nodes_.end()) throw ArgumentError("unknown tree path " + p.str());
    return it->second;
  }
  bool has_node(const Path& p) const { return nodes_.count(p.str()) > 0; }

  const std::set<std::string>& leaf_paths() const { return leaf_paths_; }

  /// Classifier stages from the root to the leaf's parent.
  RegionChain chain_for(const Path& leaf) const {
    RegionChain chain;
    for (int len = 1; len < leaf.depth(); ++len) {
      const TreeNode& ancestor = node(leaf.prefix(len));
      require(ancestor.classifier != nullptr, "ancestor of " + leaf.str() + " has no classifier");
      chain.stages.push_back({ancestor.classifier, leaf.symbol(len)});
    }
    return chain;
  }

  Matrix gather_x(const std::vector<int>& indices) const {
    Matrix x(static_cast<Eigen::Index>(indices.size()), dim_);
    for (std::size_t i = 0; i < indices.size(); ++i)
      x.row(static_cast<Eigen::Index>(i)) = obs_x_[static_cast<std::size_t>(indices[i])];
    return x;
  }

  Dataset gather(const std::vector<int>& indices) const {
    Vector f(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i)
      f[static_cast<Eigen::Index>(i)] = obs_f_[static_cast<std::size_t>(indices[i])];
    return Dataset(gather_x(indices), std::move(f));
  }

  /// One line per node: path, data count, acquisition value, split_failed.
  std::string snapshot() const {
    std::ostringstream out;
    for (const auto& [path, n] : nodes_) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", n.acq_value);
      out << path << " " << n.data.size() << " " << buf << " " << (n.split_failed ? 1 : 0)
          << "\n";
    }
    return out.str();
  }

  // Mutation entry points used by the per-node operations below.
  std::map<std::string, TreeNode>& nodes() { return nodes_; }
  std::set<std::string>& leaf_paths() { return leaf_paths_; }

 private:
  int dim_;
  int n_node_;
  TreeOptions options_;
  std::map<std::string, TreeNode> nodes_;
  std::set<std::string> leaf_paths_;
  std::vector<Vector> obs_x_;
  std::vector<double> obs_f_;
};

/// Augments a small non-root leaf's data with the nearest points (x-distance
/// only) from the other leaves, up to exactly n_node points.  Distance ties
/// break by global observation index, earliest first.
inline std::vector<int> borrow_data(const Tree& tree, const Path& p) {
  const TreeNode& n = tree.node(p);
  require(!p.is_root(), "borrow_data is for non-root leaves");
  require(n.is_leaf(), "borrow_data target must be a leaf");
  const std::size_t own = n.data.size();
  require(own >= 1, "borrow_data target has no points");
  const std::size_t n_add = static_cast<std::size_t>(tree.n_node()) - own;
  require(own < static_cast<std::size_t>(tree.n_node()), "borrow_data target already full");

  std::vector<std::pair<double, int>> candidates;
  for (const auto& leaf : tree.leaf_paths()) {
    if (leaf == p.str()) continue;
    for (int idx : tree.node(Path::parse(leaf)).data) {
      double dmin = std::numeric_limits<double>::infinity();
      const Vector& cand = tree.obs_x(idx);
      for (int own_idx : n.data)
        dmin = std::min(dmin, (cand - tree.obs_x(own_idx)).norm());
      candidates.emplace_back(dmin, idx);
    }
  }
  require(candidates.size() >= n_add, "not enough points in other leaves to borrow");
  std::sort(candidates.begin(), candidates.end());

  std::vector<int> augmented = n.data;
  for (std::size_t i = 0; i < n_add; ++i) augmented.push_back(candidates[i].second);
  return augmented;
}

/// Refit a leaf: borrow data if the node is a small non-root leaf, fit its GP,
/// rebuild the penalized acquisition with the global f_min, generate starts
/// from the node's own points, and maximize.  A fit failure leaves the node
/// with a -inf acquisition value so it is never selected.
///
/// Returns the GP training-set size, or -1 when the fit failed.
inline int update_node(Tree& tree, const Path& p, double f_min, KernelFamily family,
                       RngStream& gp_rng, RngStream& swarm_rng,
                       const SwarmOptions& swarm_opt = {}) {
  TreeNode& n = tree.node(p);
  require(n.is_leaf(), "update_node target must be a leaf");

  std::vector<int> fit_indices = n.data;
  if (!p.is_root() && n.data.size() < static_cast<std::size_t>(tree.n_node()))
    fit_indices = borrow_data(tree, p);

  const Dataset fit_data = tree.gather(fit_indices);
  try {
    n.model = fit_gp(fit_data, family, gp_rng);
  } catch (const Error& e) {
    n.model.reset();
    n.acq.reset();
    n.acq_value = -std::numeric_limits<double>::infinity();
    n.gp_train_size = static_cast<int>(fit_indices.size());
    std::fprintf(stderr, "[treebo] node %s: GP fit failed (%s); node marked unfit\n",
                 p.str().c_str(), e.what());
    return -1;
  }
  n.gp_train_size = static_cast<int>(fit_indices.size());

  const RegionChain chain = tree.chain_for(p);
  AcquisitionContext ctx{&*n.model, f_min, &chain, tree.dim()};

  Matrix starts;
  if (n.data.size() >= 2) {
    starts = gen_acq_points(tree.gather_x(n.data), swarm_rng);
  } else {
    starts.resize(100, tree.dim());
    for (Eigen::Index i = 0; i < starts.rows(); ++i)
      for (Eigen::Index j = 0; j < starts.cols(); ++j) starts(i, j) = swarm_rng.u01();
  }
  n.acq = maximize_acquisition(ctx, starts, swarm_rng, swarm_opt);
  n.acq_value = n.acq->value;
  return n.gp_train_size;
}

/// Attempt to split a leaf: cluster its data in R^{d+1} (f standardized per
/// node), train the classifier, and partition the data by the classifier's
/// predictions.  Refuses - leaving the node latched as a failed split - when
/// clustering degenerates, only one class survives, or a child would receive
/// too few points.
inline SplitOutcome split_node(Tree& tree, const Path& p, RngStream& pam_rng,
                               RngStream& svm_rng) {
  TreeNode& n = tree.node(p);
  require(n.is_leaf(), "split_node target must be a leaf");
  require(n.data.size() >= static_cast<std::size_t>(tree.n_node()),
          "split_node requires at least n_node points");
  ++n.split_attempts;

  auto fail = [&](const std::string& why) {
    n.split_failed = true;
    n.split_failed_at_size = n.data.size();
    SplitOutcome out;
    out.reason = why;
    return out;
  };

  const Matrix x = tree.gather_x(n.data);
  const Eigen::Index m = x.rows();
  Vector f(m);
  for (Eigen::Index i = 0; i < m; ++i) f[i] = tree.obs_f(n.data[static_cast<std::size_t>(i)]);

  Matrix rows(m, tree.dim() + 1);
  rows.leftCols(tree.dim()) = x;
  if (tree.options().standardize_cluster_f) {
    const double mean = f.mean();
    const double sd = std::sqrt((f.array() - mean).square().sum() / static_cast<double>(m));
    if (sd > 0.0)
      rows.col(tree.dim()) = ((f.array() - mean) / sd).matrix();
    else
      rows.col(tree.dim()) = Vector::Zero(m);
  } else {
    rows.col(tree.dim()) = f;
  }

  ClusterLabels labels;
  try {
    labels = pam_cluster(rows, pam_rng);
  } catch (const DegenerateClusterError& e) {
    return fail(std::string("degenerate clustering: ") + e.what());
  }

  std::shared_ptr<SvmClassifier> cls;
  try {
    cls = std::make_shared<SvmClassifier>(svm_train(x, labels.labels, svm_rng));
  } catch (const ClassImbalanceError& e) {
    return fail(std::string("single-class labels: ") + e.what());
  }

  std::vector<int> child1, child2;
  for (Eigen::Index i = 0; i < m; ++i) {
    const int c = classify(*cls, x.row(i).transpose());
    (c == 1 ? child1 : child2).push_back(n.data[static_cast<std::size_t>(i)]);
  }
  if (child1.empty() || child2.empty()) return fail("classifier assigns all data to one child");
  if (tree.options().refuse_small_children &&
      (child1.size() <= static_cast<std::size_t>(tree.dim()) ||
       child2.size() <= static_cast<std::size_t>(tree.dim())))
    return fail("a child would receive <= d points");

  n.classifier = cls;
  n.split_failed = false;

  SplitOutcome out;
  out.succeeded = true;
  out.child1 = p.child(1);
  out.child2 = p.child(2);
  TreeNode c1, c2;
  c1.path = out.child1;
  c1.data = std::move(child1);
  c2.path = out.child2;
  c2.data = std::move(child2);
  tree.nodes().emplace(out.child1.str(), std::move(c1));
  tree.nodes().emplace(out.child2.str(), std::move(c2));
  tree.leaf_paths().erase(p.str());
  tree.leaf_paths().insert(out.child1.str());
  tree.leaf_paths().insert(out.child2.str());
  return out;
}

}  // namespace treebo
