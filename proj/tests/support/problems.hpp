#pragma once

// Hand-sized problems used by several test binaries.

#include "mmbo/model.hpp"

namespace testsupport {

// One-dimensional instance with a linear y-cost and a decoupled quadratic
// lower level: f = x^2/2 + y, g = z^2, X = [-1,1], Y = [0,1], Lambda = [0,1].
// At (x, y, lambda) = (0, 0, 1/2) the lower bound of Y is biactive, which
// makes the multiplier system solvable with either sign pattern on that row.
inline mmbo::MinimaxBilevelProblem toy_biactive_problem() {
  using mmbo::Matrix;
  using mmbo::Vector;
  mmbo::MinimaxBilevelProblem p;
  p.dims = {1, 1, 1};
  p.fbar.value = [](const Vector& xy) { return 0.5 * xy[0] * xy[0] + xy[1]; };
  p.fbar.gradient = [](const Vector& xy) {
    Vector g(2);
    g << xy[0], 1.0;
    return g;
  };
  p.fbar.lipschitz_grad = 1.0;
  p.A = Matrix::Zero(1, 1);
  p.B = Matrix::Zero(1, 1);
  p.c = Vector::Zero(1);
  p.g.value = [](const Vector& zl) { return zl[0] * zl[0]; };
  p.g.gradient = [](const Vector& zl) {
    Vector g(2);
    g << 2.0 * zl[0], 0.0;
    return g;
  };
  p.g.lipschitz_grad = 2.0;
  mmbo::SecondOrderOracle so;
  so.hess_yy = [](const Vector&, const Vector&) { return Matrix::Constant(1, 1, 2.0); };
  so.hess_lambda_y = [](const Vector&, const Vector&) { return Matrix::Zero(1, 1); };
  so.strong_convexity_nu = 2.0;
  p.second_order = std::move(so);
  p.setX = mmbo::Box{Vector::Constant(1, -1.0), Vector::Constant(1, 1.0)};
  p.setY = mmbo::Box{Vector::Constant(1, 0.0), Vector::Constant(1, 1.0)};
  p.setLambda = mmbo::Box{Vector::Constant(1, 0.0), Vector::Constant(1, 1.0)};
  p.g_class = mmbo::ObjectiveClass::ConvexQuadratic;
  return p;
}

}  // namespace testsupport
