#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "mmbo/geometry.hpp"

namespace mmbo {

struct Dims {
  int dx = 0, dy = 0, dl = 0;
};

// Value/gradient pair for a smooth function of one stacked argument.
// lipschitz_grad bounds the gradient's Lipschitz constant over the region
// the solver probes; step sizes are derived from it, so it must be supplied
// (no automatic estimation for general objectives).
struct SmoothOracle {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  double lipschitz_grad = 0.0;
};

// Exact curvature of the lower-level objective in (z, lambda), needed by the
// second-order stationarity checks. strong_convexity_nu is the modulus in z;
// zero is allowed for linear lower levels, which disables the paths that
// invert hess_yy.
struct SecondOrderOracle {
  std::function<Matrix(const Vector&, const Vector&)> hess_yy;        // d2g/dz2, dy x dy
  std::function<Matrix(const Vector&, const Vector&)> hess_lambda_y;  // d2g/(dlam dz), dl x dy
  double strong_convexity_nu = 0.0;
};

// Structural class of an objective over a box: Multilinear means affine in
// every scalar coordinate (both extrema at corners); ConvexQuadratic means
// convex, so only the max is corner-attained. Drives the exactness flags of
// estimate_bounds.
enum class ObjectiveClass { General, Multilinear, ConvexQuadratic };

// min over x in setX of max over (y, lambda) in setY x setLambda of
//   f(x,y,lambda) = fbar(x,y) + lambda^T (A x + B y - c),
// where y is additionally constrained to minimize g(., lambda) over setY.
struct MinimaxBilevelProblem {
  Dims dims;
  SmoothOracle fbar;  // argument stacked (x; y)
  Matrix A, B;        // dl x dx, dl x dy
  Vector c;           // dl
  SmoothOracle g;     // argument stacked (z; lambda)
  ConvexSet setX, setY, setLambda;
  std::optional<SecondOrderOracle> second_order;
  bool g_linear_in_z = false;
  ObjectiveClass fbar_class = ObjectiveClass::General;
  ObjectiveClass g_class = ObjectiveClass::General;
};

struct LinearProblemData {
  Dims dims;
  Vector c1, c2;  // linear costs on x and on the lower-level variable
  Matrix A, B;    // dl x dx, dl x dy
  Vector b;       // dl
  ConvexSet setX, setY, setLambda;
};

// fbar = c1^T x, g(z,lambda) = c2^T z + lambda^T z. Attaches the exact
// second-order oracle (hess_yy = 0, hess_lambda_y = I) and the structural
// flags; L_g = 1 from the bilinear cross block.
MinimaxBilevelProblem build_linear_problem(const LinearProblemData& data);

double eval_f(const MinimaxBilevelProblem& p, const Vector& x, const Vector& y,
              const Vector& lam);

struct FGrads {
  Vector x, y, lam;
};
FGrads eval_f_grads(const MinimaxBilevelProblem& p, const Vector& x, const Vector& y,
                    const Vector& lam);

double eval_g(const MinimaxBilevelProblem& p, const Vector& z, const Vector& lam);

struct GGrads {
  Vector z, lam;
};
GGrads eval_g_grads(const MinimaxBilevelProblem& p, const Vector& z, const Vector& lam);

struct LipschitzConstants {
  double L_f = 0.0;  // gradient of f: L_fbar + ||A|| + ||B||
  double L_g = 0.0;  // gradient of g, from the oracle
  double L_P = 0.0;  // gradient of the penalty: L_f + 2 rho L_g
};
LipschitzConstants lipschitz_constants(const MinimaxBilevelProblem& p, double rho);

// Largest singular value by power iteration on M^T M: 100 iterations or
// relative change below 1e-12, deterministic seeded start.
double spectral_norm(const Matrix& M);

struct BoundEstimates {
  double f_hi = 0.0, f_low = 0.0;
  double g_hi = 0.0, g_low = 0.0;
  bool f_hi_exact = false, f_low_exact = false;
  bool g_hi_exact = false, g_low_exact = false;
  bool corners_enumerated = false;  // bounding-box corners were exhausted
  int samples = 0;
};

// Extrema of f over setX x setY x setLambda and of g over setY x setLambda,
// from bounding-box corner enumeration (up to 2^20 corners) plus uniform
// random projected-feasible samples. Corner scans over a bounding box give
// valid outer bounds for corner-attained classes; everything else is an
// estimate and flagged as such.
BoundEstimates estimate_bounds(const MinimaxBilevelProblem& p, int n_samples, uint64_t seed);

}  // namespace mmbo
