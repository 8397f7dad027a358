#include "mmbo/stationarity.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mmbo/penalty.hpp"

namespace mmbo {

GapScales default_gap_scales(double alpha_x, double tau) {
  return {1.0 / alpha_x, tau, tau, 1.0 / alpha_x};
}

GapReport gap_measures(const MinimaxBilevelProblem& p, double rho, const Vector& x,
                       const Vector& y, const Vector& lam, const Vector& z,
                       const GapScales& scales) {
  if (!(scales.x > 0.0 && scales.y > 0.0 && scales.lambda > 0.0 && scales.z > 0.0))
    throw std::invalid_argument("gap scales must be positive");
  const PRhoGrads g = p_rho_grads(p, rho, x, y, lam, z);
  GapReport rep;
  rep.scales = scales;
  rep.gap_x = scales.x * (x - project(p.setX, x - g.x / scales.x));
  rep.gap_y = scales.y * (y - project(p.setY, y + g.y / scales.y));
  rep.gap_lambda = scales.lambda * (lam - project(p.setLambda, lam + g.lam / scales.lambda));
  rep.gap_z = scales.z * (z - project(p.setY, z - g.z / scales.z));
  rep.norm_x = rep.gap_x.norm();
  rep.norm_y = rep.gap_y.norm();
  rep.norm_lambda = rep.gap_lambda.norm();
  rep.norm_z = rep.gap_z.norm();
  return rep;
}

double composite_error(const GapReport& report) {
  return std::sqrt(report.norm_x * report.norm_x + report.norm_y * report.norm_y +
                   report.norm_lambda * report.norm_lambda + report.norm_z * report.norm_z);
}

KktReport check_eps_kkt(const MinimaxBilevelProblem& p, double rho, const Vector& x,
                        const Vector& y, const Vector& lam, const Vector& z, double eps,
                        const GapScales& scales) {
  if (!(eps > 0.0)) throw std::invalid_argument("epsilon must be positive");
  KktReport rep;
  rep.epsilon = eps;
  rep.gaps = gap_measures(p, rho, x, y, lam, z, scales);
  rep.lower_gap = eval_g(p, y, lam) - lower_level_solve(p, lam, eps / 10.0).value;
  rep.verdict = rep.gaps.norm_x <= eps && rep.gaps.norm_y <= eps &&
                rep.gaps.norm_lambda <= eps && rep.gaps.norm_z <= eps && rep.lower_gap <= eps;
  return rep;
}

IndexSets index_sets(const Vector& gy_values, const Vector& mu_l, double tol) {
  if (gy_values.size() != mu_l.size())
    throw std::invalid_argument("activity/multiplier length mismatch");
  IndexSets sets;
  for (int i = 0; i < gy_values.size(); ++i) {
    const double g = gy_values[i];
    const double m = mu_l[i];
    if (g > tol || m < -tol) {
      sets.errors.push_back(i);
      continue;
    }
    const bool active = std::abs(g) <= tol;
    const bool positive = m > tol;
    if (active && positive)
      sets.alpha.push_back(i);
    else if (active)
      sets.beta.push_back(i);
    else if (!positive)
      sets.gamma.push_back(i);
    else
      sets.errors.push_back(i);  // inactive constraint with positive multiplier
  }
  return sets;
}

AffineInequalities set_inequalities(const ConvexSet& set) {
  const Box& box = bounding_box(set);
  const int n = box.dim();
  std::vector<std::pair<Vector, double>> rows;
  if (const Polyhedron* poly = std::get_if<Polyhedron>(&set)) {
    for (int i = 0; i < poly->H1.rows(); ++i)
      rows.emplace_back(poly->H1.row(i).transpose(), poly->h1[i]);
    for (int i = 0; i < poly->H2.rows(); ++i) {
      rows.emplace_back(poly->H2.row(i).transpose(), poly->h2[i]);
      rows.emplace_back(-poly->H2.row(i).transpose(), -poly->h2[i]);
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(box.ub[i])) continue;
    Vector row = Vector::Zero(n);
    row[i] = 1.0;
    rows.emplace_back(std::move(row), box.ub[i]);
  }
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(box.lb[i])) continue;
    Vector row = Vector::Zero(n);
    row[i] = -1.0;
    rows.emplace_back(std::move(row), -box.lb[i]);
  }
  AffineInequalities out;
  out.G.resize(static_cast<int>(rows.size()), n);
  out.h.resize(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    out.G.row(static_cast<int>(i)) = rows[i].first.transpose();
    out.h[static_cast<int>(i)] = rows[i].second;
  }
  return out;
}

namespace {

// Residual of one pair of the system 0 >= g _|_ mu >= 0: feasibility,
// multiplier sign, and complementarity (min(-g, mu) = 0 once both hold).
double complementarity_residual(const Vector& g, const Vector& mu) {
  double worst = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    worst = std::max({worst, g[i], -mu[i], std::abs(std::min(-g[i], mu[i]))});
  }
  return std::max(worst, 0.0);
}

}  // namespace

MpccResidualReport mpcc_residual(const MinimaxBilevelProblem& p, const Vector& x,
                                 const Vector& y, const Vector& lam,
                                 const MpccCertificate& cert, StationarityKind kind) {
  if (!p.second_order)
    throw std::invalid_argument("stationarity residuals need a second-order oracle");
  const AffineInequalities ineq_x = set_inequalities(p.setX);
  const AffineInequalities ineq_y = set_inequalities(p.setY);
  const AffineInequalities ineq_l = set_inequalities(p.setLambda);
  const auto qx = ineq_x.G.rows(), qy = ineq_y.G.rows(), ql = ineq_l.G.rows();
  if (cert.mu_x.size() != qx || cert.mu_y.size() != qy || cert.mu_lambda.size() != ql ||
      cert.mu_m.size() != qy || cert.mu_l.size() != qy || cert.mu_h.size() != p.dims.dy)
    throw std::invalid_argument("certificate multiplier dimensions do not match the constraints");

  const Vector gx_vals = ineq_x.G * x - ineq_x.h;
  const Vector gy_vals = ineq_y.G * y - ineq_y.h;
  const Vector gl_vals = ineq_l.G * lam - ineq_l.h;

  const FGrads f = eval_f_grads(p, x, y, lam);
  const Vector grad_g_y = eval_g_grads(p, y, lam).z;
  const Matrix hess_yy = p.second_order->hess_yy(y, lam);
  const Matrix hess_ly = p.second_order->hess_lambda_y(y, lam);

  MpccResidualReport rep;
  rep.sets = index_sets(gy_vals, cert.mu_l);
  auto add = [&rep](const std::string& name, double value) {
    rep.conditions[name] = value;
    rep.max_residual = std::max(rep.max_residual, value);
  };

  // Gradient equations. The set constraints are affine, so the lower-level
  // curvature term reduces to hess_yy alone.
  add("grad_x", (f.x + ineq_x.G.transpose() * cert.mu_x).norm());
  add("grad_y", (f.y - ineq_y.G.transpose() * cert.mu_y - hess_yy * cert.mu_h -
                 cert.mu_c * (ineq_y.G.transpose() * cert.mu_l))
                    .norm());
  add("grad_lambda",
      (f.lam - ineq_l.G.transpose() * cert.mu_lambda - hess_ly * cert.mu_h).norm());
  add("aux_m", (cert.mu_m - ineq_y.G * cert.mu_h - cert.mu_c * gy_vals).norm());
  add("lower_level", (grad_g_y + ineq_y.G.transpose() * cert.mu_l).norm());

  add("comp_x", complementarity_residual(gx_vals, cert.mu_x));
  add("comp_lambda", complementarity_residual(gl_vals, cert.mu_lambda));
  add("comp_lower", complementarity_residual(gy_vals, cert.mu_l));

  if (kind == StationarityKind::S) {
    add("comp_y", complementarity_residual(gy_vals, cert.mu_y));
    double comp_m = 0.0;
    for (int i = 0; i < qy; ++i) {
      comp_m = std::max({comp_m, -cert.mu_m[i], -cert.mu_l[i],
                         std::abs(std::min(cert.mu_m[i], cert.mu_l[i]))});
    }
    add("comp_m", std::max(comp_m, 0.0));
    return rep;
  }

  // M/C/W share the branch conditions away from the biactive set and differ
  // only in the rule applied on it.
  double off_branch = 0.0;
  for (int i : rep.sets.gamma) off_branch = std::max(off_branch, std::abs(cert.mu_y[i]));
  add("mu_y_on_gamma", off_branch);
  off_branch = 0.0;
  for (int i : rep.sets.alpha) off_branch = std::max(off_branch, std::abs(cert.mu_m[i]));
  add("mu_m_on_alpha", off_branch);

  double beta_rule = 0.0;
  for (int i : rep.sets.beta) {
    const double a = cert.mu_y[i], b = cert.mu_m[i];
    switch (kind) {
      case StationarityKind::M: {
        const double to_positive = std::max({0.0, -a, -b});
        beta_rule = std::max(beta_rule, std::min(to_positive, std::abs(a * b)));
        break;
      }
      case StationarityKind::C:
        beta_rule = std::max(beta_rule, std::max(0.0, -a * b));
        break;
      case StationarityKind::W:
        break;
      case StationarityKind::S:
        break;  // unreachable
    }
  }
  if (kind != StationarityKind::W) add("beta_rule", beta_rule);
  return rep;
}

namespace {

double boundary_distance(const ConvexSet& set, const Vector& v) {
  double dist = std::numeric_limits<double>::infinity();
  const Box& box = bounding_box(set);
  for (int i = 0; i < box.dim(); ++i) {
    if (std::isfinite(box.lb[i])) dist = std::min(dist, v[i] - box.lb[i]);
    if (std::isfinite(box.ub[i])) dist = std::min(dist, box.ub[i] - v[i]);
  }
  if (const Polyhedron* poly = std::get_if<Polyhedron>(&set)) {
    if (poly->H1.rows() > 0) dist = std::min(dist, (poly->h1 - poly->H1 * v).minCoeff());
    if (poly->H2.rows() > 0) dist = 0.0;  // equality constraints leave no interior
  }
  return dist;
}

}  // namespace

HResidual h_residual(const MinimaxBilevelProblem& p, const Vector& x, const Vector& lam,
                     double tol) {
  if (!p.second_order || !(p.second_order->strong_convexity_nu > 0.0))
    throw std::invalid_argument(
        "hypergradient residual needs a strongly convex lower level with curvature oracle");
  HResidual res;
  res.ybar = lower_level_solve(p, lam, tol).z;
  const FGrads f = eval_f_grads(p, x, res.ybar, lam);
  const Matrix hess_yy = p.second_order->hess_yy(res.ybar, lam);
  const Matrix hess_ly = p.second_order->hess_lambda_y(res.ybar, lam);

  Eigen::LDLT<Matrix> solve(hess_yy);
  if (solve.info() != Eigen::Success)
    throw std::runtime_error("lower-level Hessian factorization failed");
  const Vector w = solve.solve(f.y);
  const double back_err = (hess_yy * w - f.y).norm();
  if (back_err > 1e-8 * std::max(1.0, f.y.norm()))
    throw std::runtime_error("lower-level Hessian is numerically singular");

  res.r_x = f.x.norm();
  res.r_lambda = (f.lam - hess_ly * w).norm();
  const double contact = std::min({boundary_distance(p.setX, x),
                                   boundary_distance(p.setY, res.ybar),
                                   boundary_distance(p.setLambda, lam)});
  res.boundary_contact = contact <= 1e-8;
  return res;
}

}  // namespace mmbo
