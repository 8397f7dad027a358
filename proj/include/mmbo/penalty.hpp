#pragma once

#include "mmbo/model.hpp"

namespace mmbo {

// Weights and step sizes for the penalized surrogate. The theory wants
// tau >= L_P + kappa, alpha_y < 1/(L_P + tau), alpha_x < 1/L_theta; the
// reference experiments intentionally violate the step bounds, so
// check_penalty_params reports diagnostics instead of throwing.
struct PenaltyParams {
  double rho = 1.0;
  double kappa = 1.0;
  double tau = 2.0;
  double alpha_x = 0.1;
  double alpha_y = 0.1;
};

struct ParamDiagnostics {
  bool tau_ok = false;
  bool alpha_y_ok = false;
  bool alpha_x_ok = false;
  double L_P = 0.0;
  double L_theta = 0.0;
};

ParamDiagnostics check_penalty_params(const MinimaxBilevelProblem& p, const PenaltyParams& params);

// tau = tau_factor * L_P and kappa = tau - L_P, with the largest step sizes
// the convergence analysis allows (scaled by the safety factors).
PenaltyParams make_theory_params(const MinimaxBilevelProblem& p, double rho,
                                 double tau_factor = 2.0, double step_safety = 0.9);

// Smoothness constant of the max-value function theta:
// (L_f + rho L_g + 2 tau) * (1 + (L_P + tau) / kappa).
double vartheta_lipschitz(double L_f, double L_g, double L_P, double rho, double tau,
                          double kappa);

// One full iterate: outer block (x, z, u, v) plus inner block (y, lambda).
struct AugmentedPoint {
  Vector x, z, u, v, y, lambda;
};

// Penalty value f(x,y,lambda) - rho * (g(y,lambda) - g(z,lambda)).
double p_rho_value(const MinimaxBilevelProblem& p, double rho, const Vector& x, const Vector& y,
                   const Vector& lam, const Vector& z);

struct PRhoGrads {
  Vector x, y, lam, z;
};
PRhoGrads p_rho_grads(const MinimaxBilevelProblem& p, double rho, const Vector& x, const Vector& y,
                      const Vector& lam, const Vector& z);

// Surrogate Q = P_rho - (tau/2) ||(y,lambda) - (u,v)||^2.
double q_value(const MinimaxBilevelProblem& p, const PenaltyParams& params,
               const AugmentedPoint& pt);

struct QGrads {
  Vector x, z, u, v, y, lambda;
};
QGrads q_grads(const MinimaxBilevelProblem& p, const PenaltyParams& params,
               const AugmentedPoint& pt);

// P_hi = f_hi + rho (g_hi - g_low), P_low = f_low - rho (g_hi - g_low).
std::pair<double, double> p_rho_bounds(double f_hi, double f_low, double g_hi, double g_low,
                                       double rho);

struct VarthetaResult {
  double value = 0.0;
  Vector y_star, lambda_star;
  double residual = 0.0;  // gradient-mapping norm at the returned maximizer
  int iterations = 0;
  bool converged = false;
};

// theta(x,z,u,v) = max over (y,lambda) of Q. Requires tau >= L_P + kappa so
// the inner problem is kappa-strongly concave; solved by accelerated
// projected ascent with function-value restart until the gradient-mapping
// norm falls below inner_tol.
VarthetaResult vartheta(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                        const Vector& x, const Vector& z, const Vector& u, const Vector& v,
                        double inner_tol = 1e-10);

struct VarthetaGrad {
  Vector x, z, u, v;
};

// Danskin gradient (grad_x f, rho grad_z g, tau (y*-u), tau (lambda*-v)) at
// the supplied inner maximizer. Throws if the maximizer is stale, i.e. its
// gradient-mapping norm exceeds 10 * inner_tol.
VarthetaGrad vartheta_grad(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                           const Vector& x, const Vector& z, const Vector& u, const Vector& v,
                           const Vector& y_star, const Vector& lambda_star,
                           double inner_tol = 1e-10);

}  // namespace mmbo
