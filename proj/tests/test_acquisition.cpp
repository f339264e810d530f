#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "treebo/acquisition.hpp"
#include "treebo/sampling.hpp"

using namespace treebo;

namespace {

// Monte-Carlo oracle for E[max(f_min - Y, 0)], Y ~ N(mean, sd^2).
struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
};

McEstimate mc_expected_improvement(double f_min, double mean, double sd, long samples,
                                   RngStream& rng) {
  double acc = 0.0, acc2 = 0.0;
  for (long k = 0; k < samples; ++k) {
    const double y = mean + sd * rng.normal();
    const double imp = std::max(f_min - y, 0.0);
    acc += imp;
    acc2 += imp * imp;
  }
  const double m = acc / static_cast<double>(samples);
  const double var = acc2 / static_cast<double>(samples) - m * m;
  return {m, std::sqrt(std::max(var, 0.0) / static_cast<double>(samples))};
}

// A classifier stub with a single support vector; decision(x0) = coeff + bias.
std::shared_ptr<SvmClassifier> stub_classifier(const Vector& x0, double coeff, double bias) {
  auto cls = std::make_shared<SvmClassifier>();
  cls->support_x = x0.transpose();
  cls->coeffs = Vector::Constant(1, coeff);
  cls->bias = bias;
  cls->gamma = 1.0;
  cls->cost = 1.0;
  return cls;
}

}  // namespace

TEST_CASE("expected improvement closed form against Monte Carlo", "[acquisition]") {
  RngStream rng(314159);
  SECTION("degenerate sd") {
    CHECK(ei_closed_form(1.0, 2.0, 0.0) == 0.0);    // mean above f_min
    CHECK(ei_closed_form(1.0, 0.25, 0.0) == 0.75);  // improvement is deterministic
  }
  SECTION("at the mean") {
    // mu = f_min, sd = 1: phi(0) = 1/sqrt(2 pi)
    const double closed = ei_closed_form(0.0, 0.0, 1.0);
    CHECK(closed == Catch::Approx(1.0 / std::sqrt(2.0 * M_PI)).epsilon(1e-12));
    const auto mc = mc_expected_improvement(0.0, 0.0, 1.0, 1000000, rng);
    CHECK(std::abs(closed - mc.mean) <= 3.0 * mc.se);
  }
  SECTION("deep-improvement tail") {
    // f_min - mu = 10 s: essentially the full gap.
    const double s = 0.5;
    const double closed = ei_closed_form(5.0, 0.0, s);
    CHECK(std::abs(closed - 5.0) <= 1e-6 * 5.0);
    const auto mc = mc_expected_improvement(5.0, 0.0, s, 1000000, rng);
    CHECK(std::abs(closed - mc.mean) <= 3.0 * mc.se);
  }
  SECTION("grid") {
    for (double z : {-2.0, -0.5, 0.5, 2.0}) {
      for (double s : {0.1, 1.0}) {
        const double mean = -z * s;  // f_min = 0
        const double closed = ei_closed_form(0.0, mean, s);
        const auto mc = mc_expected_improvement(0.0, mean, s, 400000, rng);
        INFO("z=" << z << " s=" << s);
        CHECK(std::abs(closed - mc.mean) <= 3.0 * std::max(mc.se, 1e-12));
      }
    }
  }
}

TEST_CASE("expected improvement is non-negative and increasing in sd", "[acquisition]") {
  for (double fmin : {-1.0, 0.0, 2.0})
    for (double mean : {-2.0, 0.0, 1.5})
      for (double s : {0.0, 0.01, 0.1, 1.0, 10.0}) CHECK(ei_closed_form(fmin, mean, s) >= 0.0);

  // Increasing in s at fixed mean with mean < f_min + 5s.
  for (double mean : {-1.0, 0.0, 0.9}) {
    double prev = -1.0;
    for (double s = 0.2; s <= 5.0; s += 0.2) {
      if (!(mean < 1.0 + 5.0 * s)) continue;
      const double v = ei_closed_form(1.0, mean, s);
      CHECK(v >= prev - 1e-15);
      prev = v;
    }
  }
}

TEST_CASE("penalized acquisition branches on membership", "[acquisition]") {
  // Inside (empty chain): plain EI from the model.
  RngStream rng(5);
  Matrix x = lhs_unit(12, 2, rng);
  Vector f(12);
  for (int i = 0; i < 12; ++i) f[i] = std::sin(3.0 * x(i, 0)) + x(i, 1);
  RngStream fit_rng(6);
  const GpModel model = fit_gp(Dataset(x, f), KernelFamily::PowerExponential, fit_rng);

  RegionChain empty_chain;
  AcquisitionContext ctx{&model, f.minCoeff(), &empty_chain, 2};
  for (int k = 0; k < 50; ++k) {
    Vector q(2);
    q << rng.u01(), rng.u01();
    const double a = alpha(ctx, q);
    CHECK(a >= 0.0);
    CHECK(a == expected_improvement(model, ctx.f_min, q));
  }

  // One misclassifying stage with decision value -0.7.
  Vector x0 = Vector::Constant(2, 0.5);
  RegionChain one;
  one.stages.push_back({stub_classifier(x0, -0.2, -0.5), 2});  // decision(x0) = -0.7 -> class 1
  AcquisitionContext ctx1{&model, ctx.f_min, &one, 2};
  CHECK(alpha(ctx1, x0) == Catch::Approx(-0.7).epsilon(1e-12));

  // Two misclassifiers with decision values -0.3 and +1.2: most wrong wins.
  RegionChain two;
  two.stages.push_back({stub_classifier(x0, -0.1, -0.2), 2});  // -0.3 -> class 1, required 2
  two.stages.push_back({stub_classifier(x0, 0.4, 0.8), 1});    // +1.2 -> class 2, required 1
  AcquisitionContext ctx2{&model, ctx.f_min, &two, 2};
  CHECK(alpha(ctx2, x0) == Catch::Approx(-1.2).epsilon(1e-12));
}

TEST_CASE("start generation draws one sample per adjacent gap", "[acquisition]") {
  SECTION("three points, two ordered gaps") {
    Matrix node(3, 1);
    node << 1.0, 3.0, 7.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      RngStream rng(seed);
      const Matrix starts = gen_acq_points(node, rng);
      REQUIRE(starts.rows() == 2);
      std::vector<double> v{starts(0, 0), starts(1, 0)};
      std::sort(v.begin(), v.end());
      CHECK((v[0] >= 1.0 && v[0] <= 3.0));
      CHECK((v[1] >= 3.0 && v[1] <= 7.0));
    }
  }
  SECTION("two points make a single gap") {
    Matrix node(2, 1);
    node << 0.2, 0.9;
    RngStream rng(3);
    const Matrix starts = gen_acq_points(node, rng);
    REQUIRE(starts.rows() == 1);
    CHECK((starts(0, 0) >= 0.2 && starts(0, 0) <= 0.9));
  }
  SECTION("constant column collapses to the constant") {
    Matrix node(3, 2);
    node << 0.4, 0.1, 0.4, 0.5, 0.4, 0.9;
    RngStream rng(4);
    const Matrix starts = gen_acq_points(node, rng);
    CHECK(starts(0, 0) == 0.4);
    CHECK(starts(1, 0) == 0.4);
  }
  SECTION("sorted outputs interleave the sorted inputs") {
    RngStream rng(77);
    const Matrix node = lhs_unit(15, 3, rng);
    const Matrix starts = gen_acq_points(node, rng);
    REQUIRE(starts.rows() == 14);
    for (int j = 0; j < 3; ++j) {
      std::vector<double> in(15), out(14);
      for (int i = 0; i < 15; ++i) in[static_cast<std::size_t>(i)] = node(i, j);
      for (int i = 0; i < 14; ++i) out[static_cast<std::size_t>(i)] = starts(i, j);
      std::sort(in.begin(), in.end());
      std::sort(out.begin(), out.end());
      for (int i = 0; i < 14; ++i) {
        CHECK(out[static_cast<std::size_t>(i)] >= in[static_cast<std::size_t>(i)]);
        CHECK(out[static_cast<std::size_t>(i)] <= in[static_cast<std::size_t>(i) + 1]);
      }
    }
  }
  SECTION("fewer than two points is an error") {
    Matrix node(1, 2);
    node << 0.5, 0.5;
    RngStream rng(1);
    CHECK_THROWS_AS(gen_acq_points(node, rng), ArgumentError);
  }
}

TEST_CASE("swarm maximizer finds a concave bowl optimum", "[acquisition]") {
  const int d = 3;
  Vector x0(d);
  x0 << 0.3, 0.7, 0.5;
  auto bowl = [&](const Vector& x) { return -(x - x0).squaredNorm(); };
  RngStream rng(12);
  Matrix starts = lhs_unit(10, d, rng);
  const AcqResult res = maximize_in_unit_box(bowl, d, starts, rng);
  CHECK((res.x_star - x0).norm() <= 1e-3);
  for (Eigen::Index s = 0; s < starts.rows(); ++s)
    CHECK(res.value >= bowl(starts.row(s).transpose()));
}

TEST_CASE("swarm maximizer stays in the box and is deterministic", "[acquisition]") {
  const int d = 2;
  // Maximum outside the box pulls the swarm against the boundary.
  Vector pull = Vector::Constant(d, 1.7);
  auto fn = [&](const Vector& x) { return -(x - pull).squaredNorm(); };
  RngStream r1(9), r2(9);
  Matrix starts = lhs_unit(5, d, r1);
  Matrix starts2 = lhs_unit(5, d, r2);
  const AcqResult a = maximize_in_unit_box(fn, d, starts, r1);
  const AcqResult b = maximize_in_unit_box(fn, d, starts2, r2);
  for (int j = 0; j < d; ++j) {
    CHECK(a.x_star[j] >= 0.0);
    CHECK(a.x_star[j] <= 1.0);
  }
  CHECK((a.x_star - Vector::Ones(d)).norm() <= 1e-3);
  CHECK(a.x_star == b.x_star);
  CHECK(a.value == b.value);
  CHECK(a.polished == b.polished);
}
