#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mmbo/harness.hpp"
#include "mmbo/penalty.hpp"
#include "mmbo/rng.hpp"
#include "support/oracles.hpp"

using namespace mmbo;
using testsupport::fd_gradient;

namespace {

Vector vec1(double v) { return Vector::Constant(1, v); }

AugmentedPoint random_point(const MinimaxBilevelProblem& p, Rng& rng) {
  AugmentedPoint pt;
  pt.x = rng.normal_vector(p.dims.dx);
  pt.y = rng.normal_vector(p.dims.dy);
  pt.lambda = rng.normal_vector(p.dims.dl);
  pt.z = rng.normal_vector(p.dims.dy);
  pt.u = rng.normal_vector(p.dims.dy);
  pt.v = rng.normal_vector(p.dims.dl);
  return pt;
}

}  // namespace

TEST_CASE("penalty value and gradients match finite differences") {
  Rng rng(17);
  for (const char* id : {"ex62", "ex63"}) {
    MinimaxBilevelProblem p = builtin_example(id);
    const double rho = 3.0;
    for (int trial = 0; trial < 5; ++trial) {
      AugmentedPoint pt = random_point(p, rng);
      const PRhoGrads g = p_rho_grads(p, rho, pt.x, pt.y, pt.lambda, pt.z);
      auto fx = [&](const Vector& w) { return p_rho_value(p, rho, w, pt.y, pt.lambda, pt.z); };
      auto fy = [&](const Vector& w) { return p_rho_value(p, rho, pt.x, w, pt.lambda, pt.z); };
      auto fl = [&](const Vector& w) { return p_rho_value(p, rho, pt.x, pt.y, w, pt.z); };
      auto fz = [&](const Vector& w) { return p_rho_value(p, rho, pt.x, pt.y, pt.lambda, w); };
      CHECK((g.x - fd_gradient(fx, pt.x)).norm() <= 1e-6);
      CHECK((g.y - fd_gradient(fy, pt.y)).norm() <= 1e-6);
      CHECK((g.lam - fd_gradient(fl, pt.lambda)).norm() <= 1e-6);
      CHECK((g.z - fd_gradient(fz, pt.z)).norm() <= 1e-6);
    }
  }
}

TEST_CASE("surrogate gradients match finite differences in all six blocks") {
  MinimaxBilevelProblem p = builtin_example("ex62");
  PenaltyParams params{2.0, 3.0, 9.0, 0.1, 0.05};
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    AugmentedPoint pt = random_point(p, rng);
    const QGrads g = q_grads(p, params, pt);
    auto with = [&](auto setter) {
      return [&, setter](const Vector& w) {
        AugmentedPoint q = pt;
        setter(q, w);
        return q_value(p, params, q);
      };
    };
    CHECK((g.x - fd_gradient(with([](AugmentedPoint& q, const Vector& w) { q.x = w; }), pt.x))
              .norm() <= 1e-6);
    CHECK((g.z - fd_gradient(with([](AugmentedPoint& q, const Vector& w) { q.z = w; }), pt.z))
              .norm() <= 1e-6);
    CHECK((g.u - fd_gradient(with([](AugmentedPoint& q, const Vector& w) { q.u = w; }), pt.u))
              .norm() <= 1e-6);
    CHECK((g.v - fd_gradient(with([](AugmentedPoint& q, const Vector& w) { q.v = w; }), pt.v))
              .norm() <= 1e-6);
    CHECK((g.y - fd_gradient(with([](AugmentedPoint& q, const Vector& w) { q.y = w; }), pt.y))
              .norm() <= 1e-6);
    CHECK((g.lambda -
           fd_gradient(with([](AugmentedPoint& q, const Vector& w) { q.lambda = w; }), pt.lambda))
              .norm() <= 1e-6);
  }
}

TEST_CASE("penalty bounds widen linearly in the weight") {
  auto [hi, lo] = p_rho_bounds(10.0, -2.0, 3.0, -1.0, 5.0);
  CHECK(hi == doctest::Approx(10.0 + 5.0 * 4.0));
  CHECK(lo == doctest::Approx(-2.0 - 5.0 * 4.0));
}

TEST_CASE("parameter diagnostics reflect the step-size analysis") {
  MinimaxBilevelProblem p = builtin_example("ex62");
  const double rho = 2.0;
  PenaltyParams good = make_theory_params(p, rho);
  ParamDiagnostics d = check_penalty_params(p, good);
  CHECK(d.tau_ok);
  CHECK(d.alpha_y_ok);
  CHECK(d.alpha_x_ok);

  const LipschitzConstants lc = lipschitz_constants(p, rho);
  CHECK(d.L_P == doctest::Approx(lc.L_P).epsilon(1e-12));
  CHECK(good.tau == doctest::Approx(2.0 * lc.L_P).epsilon(1e-12));
  CHECK(good.kappa == doctest::Approx(lc.L_P).epsilon(1e-12));
  CHECK(good.alpha_y < 1.0 / (lc.L_P + good.tau));
  CHECK(d.L_theta ==
        doctest::Approx(vartheta_lipschitz(lc.L_f, lc.L_g, lc.L_P, rho, good.tau, good.kappa)));

  PenaltyParams bad = good;
  bad.tau = lc.L_P;  // leaves no concavity margin
  CHECK_FALSE(check_penalty_params(p, bad).tau_ok);
  bad = good;
  bad.alpha_y = 1.0;
  CHECK_FALSE(check_penalty_params(p, bad).alpha_y_ok);

  CHECK_THROWS_AS(make_theory_params(p, rho, 1.0), std::invalid_argument);
}

TEST_CASE("the max-value function finds the interior maximizer of ex62") {
  MinimaxBilevelProblem p = builtin_example("ex62");
  PenaltyParams params = make_theory_params(p, 2.0);
  const Vector x = vec1(0.5), z = vec1(1.0), u = vec1(0.5), v = vec1(-1.0);

  // Stationarity of Q in (y, lambda) at (0.5, -1):
  //   dQ/dy = (2y + lam) - 2 (2y + lam) - tau (y - 0.5)   = 0
  //   dQ/dl = (x + y - 2) - 2 (y - z) - tau (lam + 1)     = 0
  VarthetaResult res = vartheta(p, params, x, z, u, v, 1e-12);
  CHECK(res.converged);
  CHECK(res.y_star[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(res.lambda_star[0] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(res.value == doctest::Approx(2.0).epsilon(1e-10));

  // Independent route: exhaustive grid over the inner box.
  auto q_of = [&](const Vector& yl) {
    AugmentedPoint pt;
    pt.x = x;
    pt.z = z;
    pt.u = u;
    pt.v = v;
    pt.y = vec1(yl[0]);
    pt.lambda = vec1(yl[1]);
    return q_value(p, params, pt);
  };
  Box inner{(Vector(2) << -1, -2).finished(), (Vector(2) << 1, 2).finished()};
  testsupport::GridMax brute = testsupport::grid_max(q_of, inner, 401);
  CHECK(res.value == doctest::Approx(brute.value).epsilon(5e-3));
  CHECK(res.value >= brute.value - 1e-12);  // grid points are feasible candidates
}

TEST_CASE("the max-value gradient matches finite differences") {
  MinimaxBilevelProblem p = builtin_example("ex62");
  PenaltyParams params = make_theory_params(p, 2.0);
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector x = rng.uniform_vector(1, -0.8, 0.8);
    const Vector z = rng.uniform_vector(1, -0.8, 0.8);
    const Vector u = rng.uniform_vector(1, -0.8, 0.8);
    const Vector v = rng.uniform_vector(1, -1.5, 1.5);
    VarthetaResult res = vartheta(p, params, x, z, u, v, 1e-11);
    REQUIRE(res.converged);
    VarthetaGrad grad =
        vartheta_grad(p, params, x, z, u, v, res.y_star, res.lambda_star, 1e-11);

    Vector packed(4);
    packed << x[0], z[0], u[0], v[0];
    auto value_of = [&](const Vector& w) {
      return vartheta(p, params, vec1(w[0]), vec1(w[1]), vec1(w[2]), vec1(w[3]), 1e-11).value;
    };
    Vector fd = fd_gradient(value_of, packed, 1e-5);
    Vector got(4);
    got << grad.x[0], grad.z[0], grad.u[0], grad.v[0];
    CHECK((got - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("a stale maximizer is rejected") {
  MinimaxBilevelProblem p = builtin_example("ex62");
  PenaltyParams params = make_theory_params(p, 2.0);
  const Vector x = vec1(0.5), z = vec1(1.0), u = vec1(0.5), v = vec1(-1.0);
  VarthetaResult res = vartheta(p, params, x, z, u, v, 1e-11);
  REQUIRE(res.converged);
  Vector y_off = res.y_star;
  y_off[0] += 0.1;
  CHECK_THROWS_AS(vartheta_grad(p, params, x, z, u, v, y_off, res.lambda_star, 1e-11),
                  std::runtime_error);
}
