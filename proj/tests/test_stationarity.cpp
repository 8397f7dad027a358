#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mmbo/harness.hpp"
#include "mmbo/rng.hpp"
#include "mmbo/stationarity.hpp"
#include "support/oracles.hpp"
#include "support/problems.hpp"

using namespace mmbo;
using testsupport::fd_gradient;

namespace {

Vector vec1(double v) { return Vector::Constant(1, v); }

Vector vec(std::initializer_list<double> v) {
  return Eigen::Map<const Vector>(std::data(v), static_cast<long>(v.size()));
}

MpccCertificate zero_cert(int qx, int qy, int ql, int dy) {
  MpccCertificate c;
  c.mu_x = Vector::Zero(qx);
  c.mu_y = Vector::Zero(qy);
  c.mu_lambda = Vector::Zero(ql);
  c.mu_m = Vector::Zero(qy);
  c.mu_l = Vector::Zero(qy);
  c.mu_h = Vector::Zero(dy);
  return c;
}

}  // namespace

TEST_CASE("gap measures vanish at a projected stationary point") {
  MinimaxBilevelProblem p = builtin_example("ex62");
  // (1, 1, -2, 1) zeroes every block gradient of the penalty in closed form.
  for (double rho : {1.0, 50.0}) {
    GapScales scales = default_gap_scales(0.618, 2.0 * lipschitz_constants(p, rho).L_P);
    GapReport rep = gap_measures(p, rho, vec1(1.0), vec1(1.0), vec1(-2.0), vec1(1.0), scales);
    CHECK(rep.norm_x == 0.0);
    CHECK(rep.norm_y == 0.0);
    CHECK(rep.norm_lambda == 0.0);
    CHECK(rep.norm_z == 0.0);
    CHECK(composite_error(rep) == 0.0);
  }

  // Clipped stationarity on ex61: the lambda gradient points outward and the
  // projection absorbs it.
  MinimaxBilevelProblem q = builtin_example("ex61");
  GapScales scales = default_gap_scales(0.5, 10.0);
  GapReport rep = gap_measures(q, 7.0, vec1(0.3), vec1(0.0), vec1(0.0), vec1(0.0), scales);
  CHECK(composite_error(rep) == 0.0);

  GapScales bad;
  bad.x = 0.0;
  CHECK_THROWS_AS(gap_measures(q, 1.0, vec1(0.3), vec1(0.0), vec1(0.0), vec1(0.0), bad),
                  std::invalid_argument);
}

TEST_CASE("composite error is the stacked norm") {
  MinimaxBilevelProblem p = builtin_example("ex62");
  GapScales scales = default_gap_scales(0.618, 5.0);
  GapReport rep = gap_measures(p, 2.0, vec1(0.2), vec1(-0.3), vec1(0.7), vec1(0.1), scales);
  const double want = std::sqrt(rep.norm_x * rep.norm_x + rep.norm_y * rep.norm_y +
                                rep.norm_lambda * rep.norm_lambda + rep.norm_z * rep.norm_z);
  CHECK(composite_error(rep) == doctest::Approx(want).epsilon(1e-15));
  CHECK(rep.norm_y == doctest::Approx(rep.gap_y.norm()).epsilon(1e-15));
}

TEST_CASE("approximate stationarity verdicts track the tolerance") {
  MinimaxBilevelProblem p = builtin_example("ex62");
  GapScales scales = default_gap_scales(0.618, 2.0 * lipschitz_constants(p, 1e4).L_P);
  KktReport at_solution =
      check_eps_kkt(p, 1e4, vec1(1.0), vec1(1.0), vec1(-2.0), vec1(1.0), 1e-6, scales);
  CHECK(at_solution.verdict);
  CHECK(std::abs(at_solution.lower_gap) <= 1e-9);

  // Perturbing y to 1.1 leaves a lower-level gap of exactly 0.01.
  KktReport off =
      check_eps_kkt(p, 1e4, vec1(1.0), vec1(1.1), vec1(-2.0), vec1(1.0), 1e-3, scales);
  CHECK_FALSE(off.verdict);
  CHECK(off.lower_gap == doctest::Approx(0.01).epsilon(1e-6));

  CHECK_THROWS_AS(
      check_eps_kkt(p, 1e4, vec1(1.0), vec1(1.0), vec1(-2.0), vec1(1.0), 0.0, scales),
      std::invalid_argument);
}

TEST_CASE("activity partition separates active, biactive, and inactive rows") {
  IndexSets sets = index_sets(vec({-1e-12, -0.5, 0.0}), vec({0.3, 0.0, 0.0}));
  CHECK(sets.alpha == std::vector<int>{0});
  CHECK(sets.gamma == std::vector<int>{1});
  CHECK(sets.beta == std::vector<int>{2});
  CHECK(sets.errors.empty());

  // Constraint violation, negative multiplier, and inactive-but-priced rows
  // are all flagged.
  IndexSets bad = index_sets(vec({0.1, -0.5, -0.5}), vec({0.0, -0.1, 0.3}));
  CHECK(bad.errors == std::vector<int>{0, 1, 2});

  CHECK_THROWS_AS(index_sets(vec({0.0}), vec({0.0, 0.0})), std::invalid_argument);
}

TEST_CASE("affine rows come out in the documented order") {
  Polyhedron poly;
  poly.H1 = (Matrix(1, 2) << 1, 2).finished();
  poly.h1 = vec({3.0});
  poly.H2 = (Matrix(1, 2) << 1, -1).finished();
  poly.h2 = vec({0.0});
  poly.box.lb = vec({0.0, 0.0});
  poly.box.ub = vec({1.0, std::numeric_limits<double>::infinity()});
  AffineInequalities ineq = set_inequalities(ConvexSet{poly});

  // H1 row, +equality, -equality, finite upper bounds, lower bounds.
  REQUIRE(ineq.G.rows() == 6);
  CHECK((ineq.G.row(0) - Eigen::RowVector2d(1, 2)).norm() == 0.0);
  CHECK(ineq.h[0] == 3.0);
  CHECK((ineq.G.row(1) - Eigen::RowVector2d(1, -1)).norm() == 0.0);
  CHECK((ineq.G.row(2) - Eigen::RowVector2d(-1, 1)).norm() == 0.0);
  CHECK((ineq.G.row(3) - Eigen::RowVector2d(1, 0)).norm() == 0.0);  // x0 <= 1
  CHECK(ineq.h[3] == 1.0);
  CHECK((ineq.G.row(4) - Eigen::RowVector2d(-1, 0)).norm() == 0.0);  // -x0 <= 0
  CHECK((ineq.G.row(5) - Eigen::RowVector2d(0, -1)).norm() == 0.0);  // -x1 <= 0

  AffineInequalities box_only =
      set_inequalities(ConvexSet{Box{vec({-1.0, -2.0}), vec({1.0, 2.0})}});
  REQUIRE(box_only.G.rows() == 4);
  CHECK(box_only.h[0] == 1.0);
  CHECK(box_only.h[1] == 2.0);
  CHECK(box_only.h[2] == 1.0);  // -v0 <= -lb0 = 1
  CHECK(box_only.h[3] == 2.0);
}

TEST_CASE("the zero certificate is stationary of every kind at the ex62 solution") {
  MinimaxBilevelProblem p = builtin_example("ex62");
  MpccCertificate cert = zero_cert(2, 2, 2, 1);
  for (StationarityKind kind :
       {StationarityKind::S, StationarityKind::M, StationarityKind::C, StationarityKind::W}) {
    MpccResidualReport rep = mpcc_residual(p, vec1(1.0), vec1(1.0), vec1(-2.0), cert, kind);
    CHECK(rep.max_residual <= 1e-10);
    CHECK(rep.sets.beta == std::vector<int>{0});   // upper bound of Y is biactive
    CHECK(rep.sets.gamma == std::vector<int>{1});  // lower bound is slack
  }
}

TEST_CASE("biactive sign patterns separate the stationarity kinds on ex62") {
  MinimaxBilevelProblem p = builtin_example("ex62");
  // Multiplier system at (1, 1, -2) with mu_h = 1/2: the y and lambda
  // equations force mu_y = (-1, 0) and mu_lambda = (0, 1/2), and the
  // auxiliary block gives mu_m = (1/2, -1/2). The biactive pair
  // (mu_y, mu_m) = (-1, 1/2) has a negative product.
  MpccCertificate cert = zero_cert(2, 2, 2, 1);
  cert.mu_y = vec({-1.0, 0.0});
  cert.mu_lambda = vec({0.0, 0.5});
  cert.mu_m = vec({0.5, -0.5});
  cert.mu_h = vec1(0.5);

  MpccResidualReport w = mpcc_residual(p, vec1(1.0), vec1(1.0), vec1(-2.0), cert,
                                       StationarityKind::W);
  CHECK(w.max_residual <= 1e-12);
  MpccResidualReport c = mpcc_residual(p, vec1(1.0), vec1(1.0), vec1(-2.0), cert,
                                       StationarityKind::C);
  CHECK(c.max_residual == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(c.conditions.at("beta_rule") == doctest::Approx(0.5).epsilon(1e-12));
  MpccResidualReport m = mpcc_residual(p, vec1(1.0), vec1(1.0), vec1(-2.0), cert,
                                       StationarityKind::M);
  CHECK(m.max_residual == doctest::Approx(0.5).epsilon(1e-12));
  MpccResidualReport s = mpcc_residual(p, vec1(1.0), vec1(1.0), vec1(-2.0), cert,
                                       StationarityKind::S);
  CHECK(s.conditions.at("comp_y") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.max_residual >= m.max_residual);
}

TEST_CASE("biactive certificates on the toy problem split W from C and C from M") {
  MinimaxBilevelProblem p = testsupport::toy_biactive_problem();
  const Vector x = vec1(0.0), y = vec1(0.0), lam = vec1(0.5);

  // mu_y = 1 and mu_m = -1 on the biactive lower bound of Y (balanced by
  // mu_h = 1 in the y equation): weakly stationary, not Clarke.
  MpccCertificate opposed = zero_cert(2, 2, 2, 1);
  opposed.mu_y = vec({0.0, 1.0});
  opposed.mu_m = vec({1.0, -1.0});
  opposed.mu_h = vec1(1.0);
  CHECK(mpcc_residual(p, x, y, lam, opposed, StationarityKind::W).max_residual <= 1e-12);
  CHECK(mpcc_residual(p, x, y, lam, opposed, StationarityKind::C).max_residual ==
        doctest::Approx(1.0).epsilon(1e-12));

  // Both multipliers negative (mu_h = 1/4): Clarke holds, Mordukhovich and
  // strong do not.
  MpccCertificate both_neg = zero_cert(2, 2, 2, 1);
  both_neg.mu_y = vec({0.0, -0.5});
  both_neg.mu_m = vec({0.25, -0.25});
  both_neg.mu_h = vec1(0.25);
  CHECK(mpcc_residual(p, x, y, lam, both_neg, StationarityKind::W).max_residual <= 1e-12);
  CHECK(mpcc_residual(p, x, y, lam, both_neg, StationarityKind::C).max_residual <= 1e-12);
  CHECK(mpcc_residual(p, x, y, lam, both_neg, StationarityKind::M).max_residual ==
        doctest::Approx(0.125).epsilon(1e-12));
  CHECK(mpcc_residual(p, x, y, lam, both_neg, StationarityKind::S).max_residual ==
        doctest::Approx(0.5).epsilon(1e-12));

  // Residuals are nested S >= M >= C >= W on every certificate above.
  for (const MpccCertificate& cert : {opposed, both_neg}) {
    const double rs = mpcc_residual(p, x, y, lam, cert, StationarityKind::S).max_residual;
    const double rm = mpcc_residual(p, x, y, lam, cert, StationarityKind::M).max_residual;
    const double rc = mpcc_residual(p, x, y, lam, cert, StationarityKind::C).max_residual;
    const double rw = mpcc_residual(p, x, y, lam, cert, StationarityKind::W).max_residual;
    CHECK(rs >= rm);
    CHECK(rm >= rc);
    CHECK(rc >= rw);
  }
}

TEST_CASE("pricing an inactive row fails every kind") {
  MinimaxBilevelProblem p = builtin_example("ex62");
  MpccCertificate cert = zero_cert(2, 2, 2, 1);
  cert.mu_y = vec({0.0, 0.5});  // lower bound of Y is slack at y = 1
  MpccResidualReport rep =
      mpcc_residual(p, vec1(1.0), vec1(1.0), vec1(-2.0), cert, StationarityKind::W);
  CHECK(rep.conditions.at("mu_y_on_gamma") == doctest::Approx(0.5));
  CHECK(rep.max_residual >= 0.5);
  MpccResidualReport s =
      mpcc_residual(p, vec1(1.0), vec1(1.0), vec1(-2.0), cert, StationarityKind::S);
  CHECK(s.max_residual >= 0.5);
}

TEST_CASE("certificate shape mismatches are rejected") {
  MinimaxBilevelProblem p = builtin_example("ex62");
  MpccCertificate cert = zero_cert(2, 2, 2, 1);
  cert.mu_x = Vector::Zero(3);
  CHECK_THROWS_AS(mpcc_residual(p, vec1(1.0), vec1(1.0), vec1(-2.0), cert, StationarityKind::W),
                  std::invalid_argument);
  MinimaxBilevelProblem stripped = builtin_example("ex62");
  stripped.second_order.reset();
  MpccCertificate ok = zero_cert(2, 2, 2, 1);
  CHECK_THROWS_AS(
      mpcc_residual(stripped, vec1(1.0), vec1(1.0), vec1(-2.0), ok, StationarityKind::W),
      std::invalid_argument);
}

TEST_CASE("hypergradient residuals vanish at the ex62 solution") {
  MinimaxBilevelProblem p = builtin_example("ex62");
  HResidual h = h_residual(p, vec1(1.0), vec1(-2.0));
  CHECK(h.r_x <= 1e-10);
  CHECK(h.r_lambda <= 1e-10);
  CHECK(h.ybar[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(h.boundary_contact);  // the lower-level argmin sits on the upper bound
}

TEST_CASE("hypergradient residuals match finite differences of the reduced objective") {
  MinimaxBilevelProblem p = builtin_example("ex62");
  const double x0 = 0.3, lam0 = 0.8;
  HResidual h = h_residual(p, vec1(x0), vec1(lam0));
  CHECK_FALSE(h.boundary_contact);
  CHECK(h.ybar[0] == doctest::Approx(-0.4).epsilon(1e-8));

  // phi(x, lambda) = f(x, ybar(lambda), lambda) with ybar = -lambda/2.
  auto phi = [&](const Vector& w) {
    const double yb = -w[1] / 2.0;
    return eval_f(p, vec1(w[0]), vec1(yb), vec1(w[1]));
  };
  Vector grad = fd_gradient(phi, vec({x0, lam0}));
  CHECK(h.r_x == doctest::Approx(std::abs(grad[0])).epsilon(1e-4));
  CHECK(h.r_lambda == doctest::Approx(std::abs(grad[1])).epsilon(1e-4));
  CHECK(h.r_x == doctest::Approx(1.4).epsilon(1e-6));
  CHECK(h.r_lambda == doctest::Approx(2.1).epsilon(1e-6));
}

TEST_CASE("hypergradient residuals require lower-level curvature") {
  LinearProblemData data;
  data.dims = {1, 1, 1};
  data.c1 = vec1(1.0);
  data.c2 = vec1(1.0);
  data.A = Matrix::Zero(1, 1);
  data.B = Matrix::Zero(1, 1);
  data.b = Vector::Zero(1);
  data.setX = Box{vec1(-1.0), vec1(1.0)};
  data.setY = Box{vec1(-1.0), vec1(1.0)};
  data.setLambda = Box{vec1(0.0), vec1(1.0)};
  MinimaxBilevelProblem linear = build_linear_problem(data);
  CHECK_THROWS_AS(h_residual(linear, vec1(0.0), vec1(0.5)), std::invalid_argument);
}
