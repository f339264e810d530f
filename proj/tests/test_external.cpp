#include <catch2/catch_amalgamated.hpp>

#include "treebo/external.hpp"

using namespace treebo;

namespace {
std::string child(const std::string& mode) { return std::string(EVAL_CHILD_PATH) + " " + mode; }
}  // namespace

TEST_CASE("identity child returns the first coordinate", "[external]") {
  ExternalEvaluator ev(child("first"), 10.0);
  Vector x(2);
  x << 0.25, 0.5;
  CHECK(ev.eval(x).value == 0.25);
  x << 0.75, 0.1;
  CHECK(ev.eval(x).value == 0.75);
}

TEST_CASE("constrained reply applies squared-violation penalization", "[external]") {
  ExternalEvaluator ev(child("constrained"), 10.0);
  Vector x(2);
  x << 1.0, 2.0;
  const auto v = ev.eval(x);  // child replies "OK 1.0 2 -1.0 0.5"
  CHECK(v.value == Catch::Approx(1.25).epsilon(1e-15));
  CHECK(v.violation_count == 1);
  CHECK(v.violation_sq_sum == Catch::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("malformed replies raise evaluation errors with the raw line", "[external]") {
  ExternalEvaluator ev(child("badreply"), 10.0);
  Vector x = Vector::Zero(2);
  try {
    ev.eval(x);
    FAIL("expected EvaluationError");
  } catch (const EvaluationError& e) {
    CHECK(e.raw_response.find("NaN?") != std::string::npos);
  }
}

TEST_CASE("ERR replies propagate as evaluation errors", "[external]") {
  ExternalEvaluator ev(child("err"), 10.0);
  CHECK_THROWS_AS(ev.eval(Vector::Zero(2)), EvaluationError);
}

TEST_CASE("timeouts and child death raise evaluation errors", "[external]") {
  SECTION("timeout") {
    ExternalEvaluator ev(child("sleep"), 0.2);
    CHECK_THROWS_AS(ev.eval(Vector::Zero(2)), EvaluationError);
  }
  SECTION("child exits immediately") {
    ExternalEvaluator ev(child("die"), 2.0);
    CHECK_THROWS_AS(ev.eval(Vector::Zero(2)), EvaluationError);
  }
}

TEST_CASE("external objective round-trips through the wrapper", "[external]") {
  Objective obj = external_objective(child("sum"), Domain::unit(3), 10.0);
  Vector x(3);
  x << 0.1, 0.2, 0.3;
  CHECK(obj.eval(x) == Catch::Approx(0.6).epsilon(1e-15));
  CHECK(obj.eval_count() == 1);

  Vector outside(3);
  outside << 2.0, 0.0, 0.0;
  CHECK_THROWS_AS(obj.eval(outside), DomainViolation);
}
