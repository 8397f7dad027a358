#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmbo/model.hpp"

namespace mmbo {

// Scaling constants of the four projected-gradient gaps; the analysis pairs
// (x, z) with 1/alpha_x and (y, lambda) with tau.
struct GapScales {
  double x = 1.0, y = 1.0, lambda = 1.0, z = 1.0;
};
GapScales default_gap_scales(double alpha_x, double tau);

// Projected-gradient residuals of the penalty at (x, y, lambda, z):
// descent blocks (x, z) use p - proj(p - L^{-1} grad), ascent blocks
// (y, lambda) use p - proj(p + L^{-1} grad), each scaled by L.
struct GapReport {
  Vector gap_x, gap_y, gap_lambda, gap_z;
  double norm_x = 0.0, norm_y = 0.0, norm_lambda = 0.0, norm_z = 0.0;
  GapScales scales;
};
GapReport gap_measures(const MinimaxBilevelProblem& p, double rho, const Vector& x,
                       const Vector& y, const Vector& lam, const Vector& z,
                       const GapScales& scales);

// Norm of the four gap vectors stacked into one.
double composite_error(const GapReport& report);

// Gap thresholds plus the lower-level optimality gap; the verdict is true
// when all four gap norms and the lower gap are at most eps.
struct KktReport {
  GapReport gaps;
  double lower_gap = 0.0;
  double epsilon = 0.0;
  bool verdict = false;
};
KktReport check_eps_kkt(const MinimaxBilevelProblem& p, double rho, const Vector& x,
                        const Vector& y, const Vector& lam, const Vector& z, double eps,
                        const GapScales& scales);

// Partition of the lower-level inequality constraints by activity and
// multiplier sign: alpha active with positive multiplier, beta biactive,
// gamma inactive with zero multiplier. Indices are 0-based; pairs violating
// complementarity beyond tol land in `errors`.
struct IndexSets {
  std::vector<int> alpha, beta, gamma, errors;
};
IndexSets index_sets(const Vector& gy_values, const Vector& mu_l, double tol = 1e-8);

enum class StationarityKind { S, M, C, W };

struct MpccCertificate {
  Vector mu_x, mu_y, mu_lambda, mu_m;
  Vector mu_h;  // dimension d_y
  double mu_c = 0.0;
  Vector mu_l;
};

// Affine inequality description q(v) = G v - h <= 0 of a convex set, in the
// fixed row order: polyhedron inequality rows, then each equality doubled
// (+row, -row), then box upper bounds, then box lower bounds (lb - v <= 0).
struct AffineInequalities {
  Matrix G;
  Vector h;
};
AffineInequalities set_inequalities(const ConvexSet& set);

// Residuals of the first-order multiplier system at (x, y, lambda) with the
// lower level's KKT embedded as complementarity constraints. Evaluates every
// gradient equation, the sign/complementarity conditions, and the
// biactive-set rule of the requested kind; `conditions` maps each named
// condition to its residual and max_residual is their maximum.
struct MpccResidualReport {
  double max_residual = 0.0;
  std::map<std::string, double> conditions;
  IndexSets sets;
};
MpccResidualReport mpcc_residual(const MinimaxBilevelProblem& p, const Vector& x,
                                 const Vector& y, const Vector& lam,
                                 const MpccCertificate& cert, StationarityKind kind);

// First-order residuals of the hypergradient system at (x, lambda):
// r_x = ||grad_x f(x, ybar, lambda)|| and
// r_lambda = ||grad_lambda f - hess_lambda_y hess_yy^{-1} grad_y f|| with
// ybar = argmin_z g(z, lambda). Stated for interior solutions; boundary
// contact within 1e-8 of any set raises the caveat flag.
struct HResidual {
  double r_x = 0.0;
  double r_lambda = 0.0;
  Vector ybar;
  bool boundary_contact = false;
};
HResidual h_residual(const MinimaxBilevelProblem& p, const Vector& x, const Vector& lam,
                     double tol = 1e-10);

}  // namespace mmbo
