#include "mmbo/penalty.hpp"

#include <cmath>
#include <stdexcept>

#include "mmbo/log.hpp"

namespace mmbo {

ParamDiagnostics check_penalty_params(const MinimaxBilevelProblem& p,
                                      const PenaltyParams& params) {
  const LipschitzConstants lc = lipschitz_constants(p, params.rho);
  ParamDiagnostics d;
  d.L_P = lc.L_P;
  d.L_theta = vartheta_lipschitz(lc.L_f, lc.L_g, lc.L_P, params.rho, params.tau, params.kappa);
  d.tau_ok = params.tau >= lc.L_P + params.kappa;
  d.alpha_y_ok = params.alpha_y > 0.0 && params.alpha_y < 1.0 / (lc.L_P + params.tau);
  d.alpha_x_ok = params.alpha_x > 0.0 && params.alpha_x < 1.0 / d.L_theta;
  return d;
}

PenaltyParams make_theory_params(const MinimaxBilevelProblem& p, double rho, double tau_factor,
                                 double step_safety) {
  if (!(tau_factor > 1.0)) throw std::invalid_argument("tau factor must exceed 1");
  const LipschitzConstants lc = lipschitz_constants(p, rho);
  PenaltyParams params;
  params.rho = rho;
  params.tau = tau_factor * lc.L_P;
  params.kappa = params.tau - lc.L_P;
  params.alpha_y = step_safety / (lc.L_P + params.tau);
  const double L_theta =
      vartheta_lipschitz(lc.L_f, lc.L_g, lc.L_P, rho, params.tau, params.kappa);
  params.alpha_x = step_safety / L_theta;
  return params;
}

double vartheta_lipschitz(double L_f, double L_g, double L_P, double rho, double tau,
                          double kappa) {
  return (L_f + rho * L_g + 2.0 * tau) * (1.0 + (L_P + tau) / kappa);
}

double p_rho_value(const MinimaxBilevelProblem& p, double rho, const Vector& x, const Vector& y,
                   const Vector& lam, const Vector& z) {
  return eval_f(p, x, y, lam) - rho * (eval_g(p, y, lam) - eval_g(p, z, lam));
}

PRhoGrads p_rho_grads(const MinimaxBilevelProblem& p, double rho, const Vector& x,
                      const Vector& y, const Vector& lam, const Vector& z) {
  const FGrads f = eval_f_grads(p, x, y, lam);
  const GGrads gy = eval_g_grads(p, y, lam);
  const GGrads gz = eval_g_grads(p, z, lam);
  PRhoGrads out;
  out.x = f.x;
  out.y = f.y - rho * gy.z;
  out.lam = f.lam - rho * (gy.lam - gz.lam);
  out.z = rho * gz.z;
  return out;
}

double q_value(const MinimaxBilevelProblem& p, const PenaltyParams& params,
               const AugmentedPoint& pt) {
  const double dist_sq = (pt.y - pt.u).squaredNorm() + (pt.lambda - pt.v).squaredNorm();
  return p_rho_value(p, params.rho, pt.x, pt.y, pt.lambda, pt.z) - 0.5 * params.tau * dist_sq;
}

QGrads q_grads(const MinimaxBilevelProblem& p, const PenaltyParams& params,
               const AugmentedPoint& pt) {
  const PRhoGrads pen = p_rho_grads(p, params.rho, pt.x, pt.y, pt.lambda, pt.z);
  QGrads out;
  out.x = pen.x;
  out.z = pen.z;
  out.y = pen.y - params.tau * (pt.y - pt.u);
  out.lambda = pen.lam - params.tau * (pt.lambda - pt.v);
  out.u = params.tau * (pt.y - pt.u);
  out.v = params.tau * (pt.lambda - pt.v);
  return out;
}

std::pair<double, double> p_rho_bounds(double f_hi, double f_low, double g_hi, double g_low,
                                       double rho) {
  const double spread = rho * (g_hi - g_low);
  return {f_hi + spread, f_low - spread};
}

namespace {

struct InnerGrads {
  Vector y, lambda;
};

InnerGrads inner_grads(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                       const Vector& x, const Vector& z, const Vector& u, const Vector& v,
                       const Vector& y, const Vector& lam) {
  const FGrads f = eval_f_grads(p, x, y, lam);
  const GGrads gy = eval_g_grads(p, y, lam);
  const GGrads gz = eval_g_grads(p, z, lam);
  InnerGrads out;
  out.y = f.y - params.rho * gy.z - params.tau * (y - u);
  out.lambda = f.lam - params.rho * (gy.lam - gz.lam) - params.tau * (lam - v);
  return out;
}

// Norm of the projected-ascent fixed-point residual at (y, lambda), scaled
// by 1/step: zero exactly at the constrained maximizer of Q.
double inner_mapping_norm(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                          const Vector& x, const Vector& z, const Vector& u, const Vector& v,
                          const Vector& y, const Vector& lam, double step) {
  const InnerGrads g = inner_grads(p, params, x, z, u, v, y, lam);
  const Vector py = project(p.setY, y + step * g.y);
  const Vector pl = project(p.setLambda, lam + step * g.lambda);
  return std::sqrt((y - py).squaredNorm() + (lam - pl).squaredNorm()) / step;
}

}  // namespace

VarthetaResult vartheta(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                        const Vector& x, const Vector& z, const Vector& u, const Vector& v,
                        double inner_tol) {
  const LipschitzConstants lc = lipschitz_constants(p, params.rho);
  const double L_Q = lc.L_P + params.tau;
  const double step = 1.0 / L_Q;
  // The surrogate is strongly concave with modulus tau - L_P when the tau
  // precondition holds; take the better of that and the declared kappa.
  const double kappa_eff = std::max({params.kappa, params.tau - lc.L_P, 0.0});
  const double ratio = kappa_eff > 0.0 ? std::sqrt(kappa_eff * step) : 0.0;
  const double theta = (1.0 - ratio) / (1.0 + ratio);

  auto value_at = [&](const Vector& y, const Vector& lam) {
    AugmentedPoint pt{x, z, u, v, y, lam};
    return q_value(p, params, pt);
  };

  VarthetaResult res;
  Vector y = project(p.setY, u);
  Vector lam = project(p.setLambda, v);
  Vector y_prev = y, lam_prev = lam;
  double val = value_at(y, lam);
  constexpr int kMaxIter = 200000;
  for (int iter = 1; iter <= kMaxIter; ++iter) {
    Vector ya = y + theta * (y - y_prev);
    Vector la = lam + theta * (lam - lam_prev);
    InnerGrads g = inner_grads(p, params, x, z, u, v, ya, la);
    Vector y_new = project(p.setY, ya + step * g.y);
    Vector lam_new = project(p.setLambda, la + step * g.lambda);
    double val_new = value_at(y_new, lam_new);
    if (val_new < val) {  // restart: plain ascent step from the current point
      g = inner_grads(p, params, x, z, u, v, y, lam);
      y_new = project(p.setY, y + step * g.y);
      lam_new = project(p.setLambda, lam + step * g.lambda);
      val_new = value_at(y_new, lam_new);
    }
    y_prev = std::move(y);
    lam_prev = std::move(lam);
    y = std::move(y_new);
    lam = std::move(lam_new);
    val = val_new;
    res.iterations = iter;
    res.residual = inner_mapping_norm(p, params, x, z, u, v, y, lam, step);
    if (res.residual <= inner_tol) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged)
    log::info("inner maximization hit the iteration cap with mapping norm ", res.residual);
  res.value = val;
  res.y_star = std::move(y);
  res.lambda_star = std::move(lam);
  return res;
}

VarthetaGrad vartheta_grad(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                           const Vector& x, const Vector& z, const Vector& u, const Vector& v,
                           const Vector& y_star, const Vector& lambda_star, double inner_tol) {
  const LipschitzConstants lc = lipschitz_constants(p, params.rho);
  const double step = 1.0 / (lc.L_P + params.tau);
  const double residual = inner_mapping_norm(p, params, x, z, u, v, y_star, lambda_star, step);
  if (residual > 10.0 * inner_tol) {
    throw std::runtime_error("stale inner maximizer: gradient-mapping norm " +
                             std::to_string(residual));
  }
  VarthetaGrad grad;
  grad.x = eval_f_grads(p, x, y_star, lambda_star).x;
  grad.z = params.rho * eval_g_grads(p, z, lambda_star).z;
  grad.u = params.tau * (y_star - u);
  grad.v = params.tau * (lambda_star - v);
  return grad;
}

}  // namespace mmbo
