#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "mmbo/geometry.hpp"
#include "mmbo/harness.hpp"
#include "mmbo/model.hpp"
#include "mmbo/rng.hpp"
#include "support/oracles.hpp"

using namespace mmbo;
using testsupport::fd_gradient;
using testsupport::project_simplex;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

Box make_box(std::initializer_list<double> lb, std::initializer_list<double> ub) {
  Box b;
  b.lb = Eigen::Map<const Vector>(std::data(lb), static_cast<long>(lb.size()));
  b.ub = Eigen::Map<const Vector>(std::data(ub), static_cast<long>(ub.size()));
  return b;
}

Vector vec(std::initializer_list<double> v) {
  return Eigen::Map<const Vector>(std::data(v), static_cast<long>(v.size()));
}

// Pull a point toward a strictly feasible anchor until it lands in the set;
// bisection on the segment, so the result never depends on project().
Vector feasible_probe(const Polyhedron& poly, Vector v, const Vector& anchor) {
  if (poly.max_violation(v) <= 1e-12) return v;
  double lo = 0.0, hi = 1.0;  // fraction of the way toward v, starting at anchor
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    const Vector probe = anchor + mid * (v - anchor);
    if (poly.max_violation(probe) <= 1e-13)
      lo = mid;
    else
      hi = mid;
  }
  return anchor + lo * (v - anchor);
}

}  // namespace

TEST_CASE("box projection clamps coordinate-wise") {
  Box b = make_box({-1.0, 0.0, -kInf}, {1.0, 2.0, 5.0});
  Vector v = vec({3.0, -4.0, -100.0});
  Vector p = project(b, v);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == 0.0);
  CHECK(p[2] == -100.0);  // unbounded below: untouched
  CHECK(project(b, p) == p);
}

TEST_CASE("polyhedral projection matches the analytic simplex rule") {
  const int n = 4;
  Polyhedron simplex;
  simplex.H1.resize(0, n);
  simplex.h1.resize(0);
  simplex.H2 = Matrix::Ones(1, n);
  simplex.h2 = Vector::Ones(1);
  simplex.box.lb = Vector::Zero(n);
  simplex.box.ub = Vector::Ones(n);
  ConvexSet set = simplex;

  Rng rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    Vector v = rng.normal_vector(n, 0.0, 2.0);
    Vector got = project(set, v);
    Vector want = project_simplex(v);
    CHECK((got - want).norm() <= 1e-8);
  }
}

TEST_CASE("polyhedral projection matches the halfspace formula") {
  const int n = 3;
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Vector a = rng.normal_vector(n);
    if (a.norm() < 0.1) continue;
    const double b = rng.normal();
    Polyhedron poly;
    poly.H1 = a.transpose();
    poly.h1 = Vector::Constant(1, b);
    poly.H2.resize(0, n);
    poly.h2.resize(0);
    poly.box.lb = Vector::Constant(n, -1e6);  // wide enough to stay inactive
    poly.box.ub = Vector::Constant(n, 1e6);
    Vector v = rng.normal_vector(n, 0.0, 3.0);
    Vector want = v - std::max(0.0, (a.dot(v) - b)) / a.squaredNorm() * a;
    Vector got = project(ConvexSet{poly}, v);
    CHECK((got - want).norm() <= 1e-7);
  }
}

TEST_CASE("projection onto random polyhedra is feasible, idempotent, and variational") {
  const int n = 3;
  Rng rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    Polyhedron poly;
    poly.box.lb = Vector::Constant(n, -2.0);
    poly.box.ub = Vector::Constant(n, 2.0);
    Vector anchor = rng.uniform_vector(n, -1.0, 1.0);
    poly.H1 = rng.normal_matrix(4, n);
    poly.h1 = poly.H1 * anchor + Vector::Constant(4, 0.5);  // anchor strictly inside
    poly.H2.resize(0, n);
    poly.h2.resize(0);
    ConvexSet set = poly;

    Vector v = rng.normal_vector(n, 0.0, 3.0);
    Vector p = project(set, v);
    CHECK(set_violation(set, p) <= 1e-8);
    CHECK((project(set, p) - p).norm() <= 1e-8);

    std::vector<Vector> probes;
    probes.push_back(anchor);
    for (int j = 0; j < 8; ++j)
      probes.push_back(feasible_probe(poly, rng.uniform_vector(n, -2.0, 2.0), anchor));
    CHECK(testsupport::projection_vi_holds(v, p, probes, 1e-7));
  }
}

TEST_CASE("simplex solves a known linear program") {
  Polyhedron poly;
  poly.H1 = Matrix::Ones(1, 2);
  poly.h1 = Vector::Ones(1);
  poly.H2.resize(0, 2);
  poly.h2.resize(0);
  poly.box = make_box({0.0, 0.0}, {1.0, 1.0});
  LpResult res = lp_simplex(vec({-1.0, -2.0}), poly);
  REQUIRE(res.status == LpResult::Status::optimal);
  CHECK(res.value == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK((res.x - vec({0.0, 1.0})).norm() <= 1e-10);
}

TEST_CASE("simplex detects infeasibility") {
  Polyhedron poly;
  poly.H1 = Matrix::Ones(1, 2);
  poly.h1 = Vector::Constant(1, -1.0);  // x1 + x2 <= -1 over [0,1]^2
  poly.H2.resize(0, 2);
  poly.h2.resize(0);
  poly.box = make_box({0.0, 0.0}, {1.0, 1.0});
  CHECK(lp_simplex(vec({1.0, 1.0}), poly).status == LpResult::Status::infeasible);
}

TEST_CASE("simplex requires finite box bounds") {
  Polyhedron poly;
  poly.H1.resize(0, 2);
  poly.h1.resize(0);
  poly.H2.resize(0, 2);
  poly.h2.resize(0);
  poly.box = make_box({0.0, 0.0}, {1.0, kInf});
  CHECK_THROWS_AS(lp_simplex(vec({1.0, 1.0}), poly), std::invalid_argument);
}

TEST_CASE("simplex agrees with brute force on random instances") {
  const int n = 2;
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    Polyhedron poly;
    poly.box.lb = Vector::Constant(n, -1.5);
    poly.box.ub = Vector::Constant(n, 1.5);
    Vector anchor = rng.uniform_vector(n, -0.5, 0.5);
    poly.H1 = rng.normal_matrix(3, n);
    poly.h1 = poly.H1 * anchor + Vector::Constant(3, 0.4);
    poly.H2.resize(0, n);
    poly.h2.resize(0);
    Vector cost = rng.normal_vector(n);

    LpResult res = lp_simplex(cost, poly);
    REQUIRE(res.status == LpResult::Status::optimal);
    CHECK(poly.max_violation(res.x) <= 1e-8);

    double grid_min = kInf;
    const int res_pts = 151;
    for (int i = 0; i < res_pts; ++i) {
      for (int j = 0; j < res_pts; ++j) {
        Vector v(2);
        v << poly.box.lb[0] + 3.0 * i / (res_pts - 1), poly.box.lb[1] + 3.0 * j / (res_pts - 1);
        if (poly.max_violation(v) <= 1e-9) grid_min = std::min(grid_min, cost.dot(v));
      }
    }
    // Every feasible grid point is a candidate: the LP optimum can only be
    // lower, and at the grid spacing it cannot be much lower.
    CHECK(res.value <= grid_min + 1e-9);
    CHECK(res.value >= grid_min - 0.1);
  }
}

TEST_CASE("feasibility check on boxes") {
  FeasibilityCertificate ok = feasibility_check(ConvexSet{make_box({0.0, -1.0}, {2.0, 1.0})});
  CHECK(ok.feasible);
  CHECK(ok.strict);
  CHECK((ok.anchor - vec({1.0, 0.0})).norm() <= 1e-12);

  FeasibilityCertificate bad = feasibility_check(ConvexSet{make_box({1.0}, {0.0})});
  CHECK_FALSE(bad.feasible);
}

TEST_CASE("feasibility check on polyhedra finds strict anchors") {
  Polyhedron poly;
  poly.H1 = Matrix::Ones(1, 2);
  poly.h1 = Vector::Ones(1);
  poly.H2.resize(0, 2);
  poly.h2.resize(0);
  poly.box = make_box({0.0, 0.0}, {1.0, 1.0});
  FeasibilityCertificate cert = feasibility_check(ConvexSet{poly});
  CHECK(cert.feasible);
  CHECK(cert.strict);
  CHECK(poly.max_violation(cert.anchor) <= 1e-9);
  CHECK(cert.min_slack > 1e-6);

  poly.h1 = Vector::Constant(1, -0.5);  // contradicts the box
  FeasibilityCertificate bad = feasibility_check(ConvexSet{poly});
  CHECK_FALSE(bad.feasible);
}

TEST_CASE("feasibility check treats equality-only polyhedra as vacuously strict") {
  Polyhedron poly;
  poly.H1.resize(0, 2);
  poly.h1.resize(0);
  poly.H2 = Matrix::Ones(1, 2);
  poly.h2 = Vector::Ones(1);
  poly.box = make_box({0.0, 0.0}, {1.0, 1.0});
  FeasibilityCertificate cert = feasibility_check(ConvexSet{poly});
  CHECK(cert.feasible);
  CHECK(cert.strict);  // no inequality rows to pinch the slack
  CHECK(poly.max_violation(cert.anchor) <= 1e-9);
}

TEST_CASE("linear minimization over a box") {
  Box b = make_box({-1.0, -1.0, -1.0}, {2.0, 2.0, 2.0});
  auto [v, val] = linear_min_over_box(vec({1.0, -1.0, 0.0}), b);
  CHECK(v[0] == -1.0);
  CHECK(v[1] == 2.0);
  CHECK(v[2] == -1.0);  // zero coefficient resolves to the lower bound
  CHECK(val == doctest::Approx(-3.0));

  Box open = make_box({0.0, -kInf}, {1.0, kInf});
  CHECK_THROWS_AS(linear_min_over_box(vec({0.0, 1.0}), open), std::invalid_argument);
  auto [w, wval] = linear_min_over_box(vec({1.0, 0.0}), open);
  CHECK(w[0] == 0.0);
  CHECK(w[1] == 0.0);  // free coordinate with zero cost pins to zero
  CHECK(wval == 0.0);
}

TEST_CASE("lower-level solve on a smooth strongly convex objective") {
  MinimaxBilevelProblem p = builtin_example("ex62");  // g(z,lambda) = z^2 + lambda z on [-1,1]
  LowerLevelResult interior = lower_level_solve(p, vec({1.0}), 1e-10);
  CHECK(interior.converged);
  CHECK(interior.z[0] == doctest::Approx(-0.5).epsilon(1e-8));
  CHECK(interior.value == doctest::Approx(-0.25).epsilon(1e-8));

  LowerLevelResult clamped = lower_level_solve(p, vec({3.0}), 1e-10);
  CHECK(clamped.converged);
  CHECK(clamped.z[0] == doctest::Approx(-1.0).epsilon(1e-8));
  CHECK(clamped.value == doctest::Approx(-2.0).epsilon(1e-8));
}

TEST_CASE("lower-level solve takes the closed-form path for linear g over a box") {
  LinearProblemData data;
  data.dims = {1, 2, 2};
  data.c1 = vec({1.0});
  data.c2 = vec({1.0, -2.0});
  data.A = Matrix::Zero(2, 1);
  data.B = Matrix::Zero(2, 2);
  data.b = Vector::Zero(2);
  data.setX = make_box({-1.0}, {1.0});
  data.setY = make_box({-1.0, -1.0}, {1.0, 1.0});
  data.setLambda = make_box({0.0, 0.0}, {1.0, 1.0});
  MinimaxBilevelProblem p = build_linear_problem(data);

  // g(z, lambda) = (c2 + lambda)^T z; coefficients (1.5, -1.5) at lambda = (0.5, 0.5).
  LowerLevelResult res = lower_level_solve(p, vec({0.5, 0.5}), 1e-10);
  CHECK(res.converged);
  CHECK((res.z - vec({-1.0, 1.0})).norm() <= 1e-12);
  CHECK(res.value == doctest::Approx(-3.0));
}

TEST_CASE("lower-level solve routes linear g over a polyhedron through the simplex") {
  LinearProblemData data;
  data.dims = {1, 2, 2};
  data.c1 = vec({0.0});
  data.c2 = vec({-1.0, -1.0});
  data.A = Matrix::Zero(2, 1);
  data.B = Matrix::Zero(2, 2);
  data.b = Vector::Zero(2);
  data.setX = make_box({-1.0}, {1.0});
  Polyhedron yset;
  yset.H1 = Matrix::Ones(1, 2);
  yset.h1 = Vector::Ones(1);
  yset.H2.resize(0, 2);
  yset.h2.resize(0);
  yset.box = make_box({0.0, 0.0}, {1.0, 1.0});
  data.setY = yset;
  data.setLambda = make_box({0.0, 0.0}, {1.0, 1.0});
  MinimaxBilevelProblem p = build_linear_problem(data);

  // coefficients c2 + lambda = (-1, -0.5): minimize over the triangle -> (1, 0).
  LowerLevelResult res = lower_level_solve(p, vec({0.0, 0.5}), 1e-10);
  CHECK(res.converged);
  CHECK((res.z - vec({1.0, 0.0})).norm() <= 1e-9);
  CHECK(res.value == doctest::Approx(-1.0));
}
