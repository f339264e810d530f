#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "treebo/domain.hpp"
#include "treebo/errors.hpp"
#include "treebo/rng.hpp"

namespace treebo {

// ---------------------------------------------------------------------------
// k-medoids (PAM), k = 2
// ---------------------------------------------------------------------------

struct ClusterLabels {
  std::vector<int> labels;                 // 1 or 2 per row
  std::array<Eigen::Index, 2> medoids{};   // row indices of the two medoids
  double cost = 0.0;                       // total distance to assigned medoids
};

namespace detail {

inline Matrix pairwise_distances(const Matrix& rows) {
  const Eigen::Index n = rows.rows();
  Matrix d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dij = (rows.row(i) - rows.row(j)).norm();
      d(i, j) = dij;
      d(j, i) = dij;
    }
  }
  return d;
}

inline double pair_cost(const Matrix& d, Eigen::Index m1, Eigen::Index m2) {
  double c = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) c += std::min(d(i, m1), d(i, m2));
  return c;
}

// Steepest-descent SWAP phase: replace one medoid by one non-medoid while the
// total cost strictly improves.
inline void pam_swap(const Matrix& d, Eigen::Index& m1, Eigen::Index& m2, double& cost) {
  const Eigen::Index n = d.rows();
  for (int sweep = 0; sweep < 200; ++sweep) {
    double best_cost = cost;
    Eigen::Index best_m1 = m1, best_m2 = m2;
    for (Eigen::Index h = 0; h < n; ++h) {
      if (h == m1 || h == m2) continue;
      const double c1 = pair_cost(d, h, m2);
      if (c1 < best_cost) {
        best_cost = c1;
        best_m1 = h;
        best_m2 = m2;
      }
      const double c2 = pair_cost(d, m1, h);
      if (c2 < best_cost) {
        best_cost = c2;
        best_m1 = m1;
        best_m2 = h;
      }
    }
    if (best_cost >= cost - 1e-12 * (1.0 + std::abs(cost))) return;
    m1 = best_m1;
    m2 = best_m2;
    cost = best_cost;
  }
}

}  // namespace detail

/// 2-medoid PAM on rows of a matrix (Euclidean dissimilarity).  A BUILD
/// initialization plus 10 random starts each run the SWAP phase; the lowest
/// cost wins.  Labels follow the nearest medoid, ties to medoid 1.
inline ClusterLabels pam_cluster(const Matrix& rows, RngStream& rng) {
  const Eigen::Index n = rows.rows();
  if (n < 2) throw ArgumentError("pam_cluster requires at least 2 rows");
  const Matrix d = detail::pairwise_distances(rows);
  if (d.maxCoeff() <= 0.0) throw DegenerateClusterError("pam_cluster: all rows identical");

  // BUILD: most central row first, then the row with the largest cost profit.
  Eigen::Index m1 = 0;
  double best_total = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double total = d.col(i).sum();
    if (total < best_total) {
      best_total = total;
      m1 = i;
    }
  }
  Eigen::Index m2 = m1 == 0 ? 1 : 0;
  double best_profit = -std::numeric_limits<double>::infinity();
  for (Eigen::Index h = 0; h < n; ++h) {
    if (h == m1) continue;
    double profit = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) profit += std::max(d(i, m1) - d(i, h), 0.0);
    if (profit > best_profit) {
      best_profit = profit;
      m2 = h;
    }
  }
  double cost = detail::pair_cost(d, m1, m2);
  detail::pam_swap(d, m1, m2, cost);

  for (int start = 0; start < 10; ++start) {
    Eigen::Index r1 = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    Eigen::Index r2 =
        static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n - 1)));
    if (r2 >= r1) ++r2;
    double c = detail::pair_cost(d, r1, r2);
    detail::pam_swap(d, r1, r2, c);
    if (c < cost) {
      cost = c;
      m1 = r1;
      m2 = r2;
    }
  }

  ClusterLabels out;
  out.medoids = {m1, m2};
  out.cost = cost;
  out.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    out.labels[static_cast<std::size_t>(i)] = d(i, m1) <= d(i, m2) ? 1 : 2;
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian-kernel SVM with an SMO dual solver
// ---------------------------------------------------------------------------

/// Soft-margin binary classifier.  decision(x) = sum_j lambda_j l_j K(x_j, x) + b
/// with K(x, y) = exp(-gamma ||x - y||^2); sign < 0 maps to class 1, otherwise
/// class 2 (a zero decision value resolves to class 2).
struct SvmClassifier {
  Matrix support_x;  // s x d
  Vector coeffs;     // lambda_j * l_j
  double bias = 0.0;
  double gamma = 1.0;
  double cost = 1.0;
};

inline double decision_value(const SvmClassifier& c, const Vector& x) {
  if (x.size() != c.support_x.cols()) throw ArgumentError("decision_value: dimension mismatch");
  double s = c.bias;
  for (Eigen::Index j = 0; j < c.support_x.rows(); ++j) {
    const double d2 = (c.support_x.row(j).transpose() - x).squaredNorm();
    s += c.coeffs[j] * std::exp(-c.gamma * d2);
  }
  return s;
}

inline int classify(const SvmClassifier& c, const Vector& x) {
  return decision_value(c, x) < 0.0 ? 1 : 2;
}

/// Cross-validation grid in selection order: C ascending (2^-4..2^4) outer,
/// gamma ascending (d^-3..d^3) inner, so the first strict accuracy improvement
/// realizes the smaller-C-then-smaller-gamma tie rule.  Duplicate gammas
/// (d = 1) are removed.
inline std::vector<std::pair<double, double>> svm_grid(int d) {
  std::vector<double> gammas;
  for (int e = -3; e <= 3; ++e) {
    const double g = std::pow(static_cast<double>(d), e);
    bool dup = false;
    for (double seen : gammas)
      if (seen == g) dup = true;
    if (!dup) gammas.push_back(g);
  }
  std::sort(gammas.begin(), gammas.end());
  std::vector<std::pair<double, double>> grid;
  for (int e = -4; e <= 4; ++e) {
    const double c = std::pow(2.0, e);
    for (double g : gammas) grid.emplace_back(g, c);
  }
  return grid;
}

namespace detail {

struct SmoResult {
  Vector lambda;  // dual coefficients, 0 <= lambda_i <= C
  double bias = 0.0;
};

// Dual solver: minimize (1/2) a'Qa - e'a subject to 0 <= a <= C, y'a = 0,
// where Q_ij = y_i y_j K_ij.  Maximal-violating-pair working-set selection,
// stopping on a KKT-violation gap of `tol`.
inline SmoResult smo_solve(const Matrix& kernel, const std::vector<int>& y, double c,
                           double tol = 1e-3, long long max_updates_per_point = 10000) {
  const Eigen::Index n = kernel.rows();
  Vector a = Vector::Zero(n);
  Vector g = Vector::Constant(n, -1.0);  // gradient of the dual objective
  const long long max_updates =
      max_updates_per_point * static_cast<long long>(std::max<Eigen::Index>(n, 1));

  auto in_up = [&](Eigen::Index t) {
    return (y[static_cast<std::size_t>(t)] > 0 && a[t] < c) ||
           (y[static_cast<std::size_t>(t)] < 0 && a[t] > 0);
  };
  auto in_low = [&](Eigen::Index t) {
    return (y[static_cast<std::size_t>(t)] > 0 && a[t] > 0) ||
           (y[static_cast<std::size_t>(t)] < 0 && a[t] < c);
  };

  for (long long iter = 0; iter < max_updates; ++iter) {
    Eigen::Index i = -1, j = -1;
    double m_up = -std::numeric_limits<double>::infinity();
    double m_low = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      const double v = -y[static_cast<std::size_t>(t)] * g[t];
      if (in_up(t) && v > m_up) {
        m_up = v;
        i = t;
      }
      if (in_low(t) && v < m_low) {
        m_low = v;
        j = t;
      }
    }
    if (i < 0 || j < 0 || m_up - m_low <= tol) break;

    const int yi = y[static_cast<std::size_t>(i)];
    const int yj = y[static_cast<std::size_t>(j)];
    const double kii = kernel(i, i), kjj = kernel(j, j), kij = kernel(i, j);
    double quad = kii + kjj - 2.0 * kij;
    if (quad <= 0.0) quad = 1e-12;

    const double ai_old = a[i], aj_old = a[j];
    if (yi != yj) {
      const double delta = (-g[i] - g[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0.0) {
        if (a[j] < 0.0) {
          a[j] = 0.0;
          a[i] = diff;
        }
      } else {
        if (a[i] < 0.0) {
          a[i] = 0.0;
          a[j] = -diff;
        }
      }
      if (diff > 0.0) {
        if (a[i] > c) {
          a[i] = c;
          a[j] = c - diff;
        }
      } else {
        if (a[j] > c) {
          a[j] = c;
          a[i] = c + diff;
        }
      }
    } else {
      const double delta = (g[i] - g[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > c) {
        if (a[i] > c) {
          a[i] = c;
          a[j] = sum - c;
        }
        if (a[j] > c) {
          a[j] = c;
          a[i] = sum - c;
        }
      } else {
        if (a[j] < 0.0) {
          a[j] = 0.0;
          a[i] = sum;
        }
        if (a[i] < 0.0) {
          a[i] = 0.0;
          a[j] = sum;
        }
      }
    }

    const double di = (a[i] - ai_old) * yi;
    const double dj = (a[j] - aj_old) * yj;
    for (Eigen::Index t = 0; t < n; ++t)
      g[t] += y[static_cast<std::size_t>(t)] * (kernel(t, i) * di + kernel(t, j) * dj);
  }

  // Intercept from free support vectors; midpoint of the violation bounds if
  // none are free.
  SmoResult out;
  out.lambda = a;
  double acc = 0.0;
  int free_count = 0;
  const double eps = 1e-9 * c;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (a[t] > eps && a[t] < c - eps) {
      // y_t g_t = y_t (Qa)_t - y_t = (sum_j a_j y_j K_tj) - y_t = -b at KKT
      acc += -y[static_cast<std::size_t>(t)] * g[t];
      ++free_count;
    }
  }
  if (free_count > 0) {
    out.bias = acc / free_count;
  } else {
    double m_up = -std::numeric_limits<double>::infinity();
    double m_low = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      const double v = -y[static_cast<std::size_t>(t)] * g[t];
      if (in_up(t)) m_up = std::max(m_up, v);
      if (in_low(t)) m_low = std::min(m_low, v);
    }
    out.bias = (m_up + m_low) / 2.0;
  }
  return out;
}

inline Matrix rbf_kernel_matrix(const Matrix& sqdist, double gamma) {
  return (-gamma * sqdist.array()).exp().matrix();
}

inline Matrix squared_distances(const Matrix& x) {
  const Eigen::Index n = x.rows();
  Matrix d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (x.row(i) - x.row(j)).squaredNorm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

inline SvmClassifier assemble_classifier(const Matrix& x, const std::vector<int>& y,
                                         const SmoResult& smo, double gamma, double c) {
  std::vector<Eigen::Index> sv;
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    if (smo.lambda[t] > 1e-12) sv.push_back(t);
  SvmClassifier cls;
  cls.gamma = gamma;
  cls.cost = c;
  cls.bias = smo.bias;
  cls.support_x.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
  cls.coeffs.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t r = 0; r < sv.size(); ++r) {
    cls.support_x.row(static_cast<Eigen::Index>(r)) = x.row(sv[r]);
    cls.coeffs[static_cast<Eigen::Index>(r)] =
        smo.lambda[sv[r]] * y[static_cast<std::size_t>(sv[r])];
  }
  return cls;
}

}  // namespace detail

/// Trains the soft-margin Gaussian-kernel SVM over the (gamma, C) grid with
/// stratified cross-validated accuracy (10 folds; fewer when the minority
/// class is small; leave-one-out below 10 rows), then retrains the winner on
/// all rows.  Cluster label 1 maps to SVM label -1, label 2 to +1.
inline SvmClassifier svm_train(const Matrix& x_rows, const std::vector<int>& labels,
                               RngStream& rng) {
  const Eigen::Index n = x_rows.rows();
  const int d = static_cast<int>(x_rows.cols());
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw ArgumentError("svm_train: label count mismatch");

  std::vector<int> y(labels.size());
  std::vector<Eigen::Index> class1, class2;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l == 1) {
      y[static_cast<std::size_t>(i)] = -1;
      class1.push_back(i);
    } else if (l == 2) {
      y[static_cast<std::size_t>(i)] = +1;
      class2.push_back(i);
    } else {
      throw ArgumentError("svm_train: labels must be 1 or 2");
    }
  }
  if (class1.empty() || class2.empty())
    throw ClassImbalanceError("svm_train: both classes must be present");

  // Stratified fold assignment (round-robin after a per-class shuffle).
  const auto minority = std::min(class1.size(), class2.size());
  int folds;
  if (n < 10)
    folds = static_cast<int>(n);  // leave-one-out
  else
    folds = minority < 10 ? std::max<int>(2, static_cast<int>(minority)) : 10;
  rng.shuffle(class1);
  rng.shuffle(class2);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  int next = 0;
  for (Eigen::Index i : class1) fold_of[static_cast<std::size_t>(i)] = next++ % folds;
  for (Eigen::Index i : class2) fold_of[static_cast<std::size_t>(i)] = next++ % folds;

  const Matrix sqdist = detail::squared_distances(x_rows);
  const auto grid = svm_grid(d);

  double best_acc = -1.0;
  std::pair<double, double> best_pair = grid.front();
  Matrix kernel_cache;
  double cached_gamma = std::numeric_limits<double>::quiet_NaN();
  for (const auto& [gamma, c] : grid) {
    if (gamma != cached_gamma) {
      kernel_cache = detail::rbf_kernel_matrix(sqdist, gamma);
      cached_gamma = gamma;
    }
    int correct = 0;
    for (int fold = 0; fold < folds; ++fold) {
      std::vector<Eigen::Index> train_idx, test_idx;
      for (Eigen::Index i = 0; i < n; ++i)
        (fold_of[static_cast<std::size_t>(i)] == fold ? test_idx : train_idx).push_back(i);
      if (test_idx.empty()) continue;
      bool single_class = true;
      for (std::size_t t = 1; t < train_idx.size(); ++t)
        if (y[static_cast<std::size_t>(train_idx[t])] !=
            y[static_cast<std::size_t>(train_idx[0])]) {
          single_class = false;
          break;
        }
      if (train_idx.empty() || single_class) {
        // Degenerate fold: predict the training majority (or class 2).
        const int pred = train_idx.empty() ? +1 : y[static_cast<std::size_t>(train_idx[0])];
        for (Eigen::Index i : test_idx)
          if (y[static_cast<std::size_t>(i)] == pred) ++correct;
        continue;
      }
      const Eigen::Index m = static_cast<Eigen::Index>(train_idx.size());
      Matrix ksub(m, m);
      std::vector<int> ysub(train_idx.size());
      for (Eigen::Index a = 0; a < m; ++a) {
        ysub[static_cast<std::size_t>(a)] = y[static_cast<std::size_t>(train_idx[a])];
        for (Eigen::Index b = 0; b < m; ++b) ksub(a, b) = kernel_cache(train_idx[a], train_idx[b]);
      }
      const auto smo = detail::smo_solve(ksub, ysub, c);
      for (Eigen::Index i : test_idx) {
        double dec = smo.bias;
        for (Eigen::Index a = 0; a < m; ++a)
          dec += smo.lambda[a] * ysub[static_cast<std::size_t>(a)] * kernel_cache(train_idx[a], i);
        const int pred = dec < 0.0 ? -1 : +1;
        if (pred == y[static_cast<std::size_t>(i)]) ++correct;
      }
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(n);
    if (acc > best_acc) {
      best_acc = acc;
      best_pair = {gamma, c};
    }
  }

  const Matrix kfull = detail::rbf_kernel_matrix(sqdist, best_pair.first);
  const auto smo = detail::smo_solve(kfull, y, best_pair.second);
  return detail::assemble_classifier(x_rows, y, smo, best_pair.first, best_pair.second);
}

// ---------------------------------------------------------------------------
// Region chains
// ---------------------------------------------------------------------------

struct RegionStage {
  std::shared_ptr<const SvmClassifier> classifier;
  int required_class = 1;  // 1 or 2
};

/// Ordered classifier stages from the root to a leaf's parent; x belongs to
/// the leaf's subregion iff every stage classifies it as required.
struct RegionChain {
  std::vector<RegionStage> stages;
};

struct Membership {
  bool inside = true;
  std::vector<std::pair<int, double>> misclassified;  // (stage index, decision value)
};

inline Membership region_membership(const RegionChain& chain, const Vector& x) {
  Membership out;
  for (std::size_t s = 0; s < chain.stages.size(); ++s) {
    const auto& stage = chain.stages[s];
    const double dec = decision_value(*stage.classifier, x);
    const int cls = dec < 0.0 ? 1 : 2;
    if (cls != stage.required_class) out.misclassified.emplace_back(static_cast<int>(s), dec);
  }
  out.inside = out.misclassified.empty();
  return out;
}

}  // namespace treebo
