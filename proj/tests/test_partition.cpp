#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "treebo/partition.hpp"
#include "treebo/sampling.hpp"

using namespace treebo;

namespace {

// Exhaustive 2-medoid oracle: best cost over all C(n, 2) medoid pairs.
double exhaustive_pam_cost(const Matrix& rows) {
  const Eigen::Index n = rows.rows();
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a + 1; b < n; ++b) {
      double cost = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        cost += std::min((rows.row(i) - rows.row(a)).norm(), (rows.row(i) - rows.row(b)).norm());
      best = std::min(best, cost);
    }
  return best;
}

Matrix random_rows(int n, int d, RngStream& rng) {
  Matrix m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rng.u01();
  return m;
}

// Two well-separated Gaussian blobs with the given labels.
std::pair<Matrix, std::vector<int>> blobs(int n1, int n2, int d, double gap, RngStream& rng) {
  Matrix x(n1 + n2, d);
  std::vector<int> labels;
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = 0.25 + 0.05 * rng.normal();
    labels.push_back(1);
  }
  for (int i = 0; i < n2; ++i) {
    for (int j = 0; j < d; ++j) x(n1 + i, j) = 0.25 + gap + 0.05 * rng.normal();
    labels.push_back(2);
  }
  return {x, labels};
}

}  // namespace

TEST_CASE("pam separates two far groups", "[partition]") {
  Matrix rows(4, 1);
  rows << 0.0, 0.1, 10.0, 10.1;
  RngStream rng(17);
  const auto res = pam_cluster(rows, rng);
  CHECK(res.labels[0] == res.labels[1]);
  CHECK(res.labels[2] == res.labels[3]);
  CHECK(res.labels[0] != res.labels[2]);
  CHECK(res.cost == Catch::Approx(exhaustive_pam_cost(rows)).epsilon(1e-12));
}

TEST_CASE("pam puts two distinct rows in their own clusters", "[partition]") {
  Matrix rows(2, 2);
  rows << 0.1, 0.2, 0.8, 0.9;
  RngStream rng(3);
  const auto res = pam_cluster(rows, rng);
  CHECK(res.labels[0] != res.labels[1]);
  CHECK(res.cost == 0.0);
}

TEST_CASE("pam equals the exhaustive medoid-pair minimum on small data", "[partition]") {
  RngStream rng(90210);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform_int(10));  // up to 12 rows
    const int d = 1 + static_cast<int>(rng.uniform_int(4));
    const Matrix rows = random_rows(n, d, rng);
    const auto res = pam_cluster(rows, rng);
    const double want = exhaustive_pam_cost(rows);
    INFO("trial " << trial << " n=" << n << " d=" << d);
    CHECK(res.cost == Catch::Approx(want).margin(1e-12));
  }
}

TEST_CASE("pam rejects identical rows and is permutation-stable", "[partition]") {
  RngStream rng(8);
  Matrix same = Matrix::Constant(5, 3, 0.4);
  CHECK_THROWS_AS(pam_cluster(same, rng), DegenerateClusterError);

  // Permuting rows permutes labels (up to the 1<->2 swap).
  const Matrix rows = random_rows(9, 2, rng);
  RngStream r1(21), r2(21);
  const auto base = pam_cluster(rows, r1);
  const auto perm = rng.permutation(9);
  Matrix shuffled(9, 2);
  for (int i = 0; i < 9; ++i) shuffled.row(i) = rows.row(static_cast<Eigen::Index>(perm[i]));
  const auto shuffled_res = pam_cluster(shuffled, r2);
  CHECK(shuffled_res.cost == Catch::Approx(base.cost).margin(1e-12));
  const bool flipped = shuffled_res.labels[0] != base.labels[static_cast<std::size_t>(perm[0])];
  for (int i = 0; i < 9; ++i) {
    const int want = base.labels[static_cast<std::size_t>(perm[i])];
    const int got = shuffled_res.labels[static_cast<std::size_t>(i)];
    CHECK(got == (flipped ? 3 - want : want));
  }
}

TEST_CASE("cv grid enumerates the 63 gamma/cost pairs", "[partition]") {
  for (int d : {2, 6, 10}) {
    const auto grid = svm_grid(d);
    REQUIRE(grid.size() == 63);
    // Exactly the cross product {d^-3..d^3} x {2^-4..2^4}.
    std::set<std::pair<double, double>> seen(grid.begin(), grid.end());
    CHECK(seen.size() == 63);
    for (int ge = -3; ge <= 3; ++ge)
      for (int ce = -4; ce <= 4; ++ce)
        CHECK(seen.count({std::pow(static_cast<double>(d), ge), std::pow(2.0, ce)}) == 1);
  }
  // d = 1 collapses all gammas to 1.
  CHECK(svm_grid(1).size() == 9);
}

TEST_CASE("svm separates linearly separable blobs exactly", "[partition]") {
  RngStream rng(1234);
  for (int trial = 0; trial < 5; ++trial) {
    auto [x, labels] = blobs(12, 15, 2, 0.5, rng);
    RngStream train_rng(100 + static_cast<std::uint64_t>(trial));
    const SvmClassifier cls = svm_train(x, labels, train_rng);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      CHECK(classify(cls, x.row(i).transpose()) == labels[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("svm training rejects single-class labels", "[partition]") {
  RngStream rng(2);
  const Matrix x = random_rows(12, 2, rng);
  std::vector<int> labels(12, 1);
  RngStream train_rng(3);
  CHECK_THROWS_AS(svm_train(x, labels, train_rng), ClassImbalanceError);
}

TEST_CASE("flipping labels negates the decision function", "[partition]") {
  RngStream rng(4242);
  auto [x, labels] = blobs(10, 13, 3, 0.4, rng);
  std::vector<int> flipped;
  for (int l : labels) flipped.push_back(3 - l);
  RngStream r1(7), r2(7);
  const SvmClassifier a = svm_train(x, labels, r1);
  const SvmClassifier b = svm_train(x, flipped, r2);
  for (int k = 0; k < 200; ++k) {
    Vector q(3);
    for (int j = 0; j < 3; ++j) q[j] = rng.u01();
    CHECK(decision_value(a, q) == Catch::Approx(-decision_value(b, q)).margin(1e-6));
  }
}

TEST_CASE("decision satisfies the dual KKT conditions", "[partition]") {
  RngStream rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    // Overlapping blobs so some multipliers hit the box.
    auto [x, labels] = blobs(15, 15, 2, 0.15, rng);
    const Matrix sq = detail::squared_distances(x);
    const double gamma = 2.0, c = 2.0;
    const Matrix kernel = detail::rbf_kernel_matrix(sq, gamma);
    std::vector<int> y;
    for (int l : labels) y.push_back(l == 1 ? -1 : +1);
    const auto smo = detail::smo_solve(kernel, y, c);
    const SvmClassifier cls = detail::assemble_classifier(x, y, smo, gamma, c);

    double eq = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double lambda = smo.lambda[i];
      CHECK(lambda >= -1e-12);
      CHECK(lambda <= c + 1e-12);
      eq += lambda * y[static_cast<std::size_t>(i)];
      const double margin = y[static_cast<std::size_t>(i)] * decision_value(cls, x.row(i).transpose());
      if (lambda < 1e-9) {
        CHECK(margin >= 1.0 - 1e-3);
      } else if (lambda > c - 1e-9) {
        CHECK(margin <= 1.0 + 1e-3);
      } else {
        CHECK(std::abs(margin - 1.0) <= 1e-3);  // free support vector: |decision| = 1
      }
    }
    CHECK(std::abs(eq) <= 1e-9);
  }
}

TEST_CASE("decision tends to the bias far away and is continuous", "[partition]") {
  RngStream rng(6);
  auto [x, labels] = blobs(10, 10, 2, 0.4, rng);
  RngStream train_rng(8);
  const SvmClassifier cls = svm_train(x, labels, train_rng);

  Vector far = Vector::Constant(2, 1e6);
  CHECK(decision_value(cls, far) == Catch::Approx(cls.bias).margin(1e-12));

  // Local Lipschitz bound from kernel smoothness: |K'| <= sqrt(2 gamma / e).
  const double lip =
      cls.coeffs.cwiseAbs().sum() * std::sqrt(2.0 * cls.gamma / std::exp(1.0));
  for (int k = 0; k < 300; ++k) {
    Vector q(2), dq(2);
    for (int j = 0; j < 2; ++j) {
      q[j] = rng.u01();
      dq[j] = 1e-4 * (rng.u01() - 0.5);
    }
    const double delta = std::abs(decision_value(cls, q + dq) - decision_value(cls, q));
    CHECK(delta <= lip * dq.norm() + 1e-12);
  }
}

TEST_CASE("region chains evaluate the recursive subregion definition", "[partition]") {
  RngStream rng(55);

  // Empty chain: the whole domain.
  RegionChain root;
  for (int k = 0; k < 20; ++k) {
    Vector q(2);
    q << rng.u01(), rng.u01();
    CHECK(region_membership(root, q).inside);
  }

  // Two-stage chain vs direct recursive evaluation.
  auto [x1, l1] = blobs(12, 12, 2, 0.4, rng);
  auto [x2, l2] = blobs(10, 14, 2, 0.3, rng);
  RngStream t1(71), t2(72);
  auto c0 = std::make_shared<SvmClassifier>(svm_train(x1, l1, t1));
  auto c02 = std::make_shared<SvmClassifier>(svm_train(x2, l2, t2));

  // Path 021: requires class 2 from the root classifier, class 1 from the next.
  RegionChain chain;
  chain.stages.push_back({c0, 2});
  chain.stages.push_back({c02, 1});

  for (int k = 0; k < 2000; ++k) {
    Vector q(2);
    q << rng.u01(), rng.u01();
    const auto m = region_membership(chain, q);
    const bool want = classify(*c0, q) == 2 && classify(*c02, q) == 1;
    CHECK(m.inside == want);
    // The misclassified list carries exactly the stages that disagree.
    for (const auto& [stage, dec] : m.misclassified) {
      const auto& st = chain.stages[static_cast<std::size_t>(stage)];
      CHECK(classify(*st.classifier, q) != st.required_class);
      CHECK(dec == decision_value(*st.classifier, q));
    }
  }
}
