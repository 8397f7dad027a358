#include "mmbo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mmbo/log.hpp"
#include "mmbo/model.hpp"

namespace mmbo {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

bool Box::bounded() const { return lb.allFinite() && ub.allFinite(); }

double Box::max_violation(const Vector& v) const {
  double worst = 0.0;
  for (int i = 0; i < dim(); ++i) {
    if (std::isfinite(lb[i])) worst = std::max(worst, lb[i] - v[i]);
    if (std::isfinite(ub[i])) worst = std::max(worst, v[i] - ub[i]);
  }
  return worst;
}

double Polyhedron::max_violation(const Vector& v) const {
  double worst = box.max_violation(v);
  if (H1.rows() > 0) worst = std::max(worst, (H1 * v - h1).maxCoeff());
  if (H2.rows() > 0) worst = std::max(worst, (H2 * v - h2).cwiseAbs().maxCoeff());
  return worst;
}

int set_dim(const ConvexSet& set) {
  return std::visit([](const auto& s) { return s.dim(); }, set);
}

const Box& bounding_box(const ConvexSet& set) {
  if (const Box* b = std::get_if<Box>(&set)) return *b;
  return std::get<Polyhedron>(set).box;
}

double set_violation(const ConvexSet& set, const Vector& v) {
  return std::visit([&](const auto& s) { return s.max_violation(v); }, set);
}

bool is_box(const ConvexSet& set) { return std::holds_alternative<Box>(set); }

Vector project(const Box& box, const Vector& v) { return v.cwiseMax(box.lb).cwiseMin(box.ub); }

namespace {

// Dykstra's alternating projections with one correction per factor: the
// half-space rows, the affine equality block (closed form through a complete
// orthogonal decomposition), and the box. Converges to the exact projection
// for nonempty intersections; the summed correction increment is the usual
// stopping functional.
Vector dykstra_project(const Polyhedron& poly, const Vector& v, const ProjectionSettings& st) {
  const int n = poly.dim();
  const int m1 = static_cast<int>(poly.H1.rows());
  const bool has_eq = poly.H2.rows() > 0;
  if (m1 == 0 && !has_eq) return project(poly.box, v);

  Vector row_sq(m1);
  for (int i = 0; i < m1; ++i) row_sq[i] = poly.H1.row(i).squaredNorm();
  Eigen::CompleteOrthogonalDecomposition<Matrix> eq;
  if (has_eq) {
    eq.compute(poly.H2);
    if (eq.rank() == n) {
      // The equality block pins a unique point, so the projection is that
      // point whenever it satisfies the remaining constraints; alternating
      // projections would only crawl toward it.
      const Vector w0 = eq.solve(poly.h2);
      const double feas_tol = 1e-8 * (1.0 + poly.h2.cwiseAbs().maxCoeff());
      if (poly.max_violation(w0) > feas_tol)
        throw std::runtime_error(
            "polyhedral projection: the equality block admits a single point that violates "
            "the other constraints; set may be empty");
      return project(poly.box, w0);
    }
  }

  const int factors = m1 + (has_eq ? 1 : 0) + 1;
  std::vector<Vector> corr(factors, Vector::Zero(n));
  Vector x = v;
  double increment = kInf;
  for (int sweep = 0; sweep < st.max_sweeps; ++sweep) {
    increment = 0.0;
    int f = 0;
    for (int i = 0; i < m1; ++i, ++f) {
      Vector w = x + corr[f];
      Vector y = w;
      const double gap = poly.H1.row(i).dot(w) - poly.h1[i];
      if (gap > 0.0 && row_sq[i] > 0.0) y -= (gap / row_sq[i]) * poly.H1.row(i).transpose();
      Vector p = w - y;
      increment += (p - corr[f]).squaredNorm();
      corr[f] = std::move(p);
      x = std::move(y);
    }
    if (has_eq) {
      Vector w = x + corr[f];
      Vector y = w - eq.solve(poly.H2 * w - poly.h2);
      Vector p = w - y;
      increment += (p - corr[f]).squaredNorm();
      corr[f] = std::move(p);
      x = std::move(y);
      ++f;
    }
    {
      Vector w = x + corr[f];
      Vector y = project(poly.box, w);
      Vector p = w - y;
      increment += (p - corr[f]).squaredNorm();
      corr[f] = std::move(p);
      x = std::move(y);
    }
    if (std::sqrt(increment) <= st.tol) return x;
  }
  throw std::runtime_error("polyhedral projection did not converge (residual " +
                           std::to_string(std::sqrt(increment)) + "); set may be empty");
}

}  // namespace

Vector project(const ConvexSet& set, const Vector& v, const ProjectionSettings& settings) {
  if (const Box* b = std::get_if<Box>(&set)) return project(*b, v);
  return dykstra_project(std::get<Polyhedron>(set), v, settings);
}

namespace {

// Tableau simplex over min c^T w, A w = b, w >= 0, with Bland's rule for
// both the entering and the tie-broken leaving choice (anti-cycling).
// Columns at index >= blocked_from never enter; phase 2 uses this to keep
// zero-valued artificials trapped in degenerate bases.
struct Tableau {
  Matrix A;
  Vector b;
  std::vector<int> basis;
  std::vector<char> is_basic;
  int blocked_from = 0;
  int iterations = 0;

  void pivot(int row, int col) {
    const double p = A(row, col);
    A.row(row) /= p;
    b[row] /= p;
    for (int i = 0; i < A.rows(); ++i) {
      if (i == row) continue;
      const double factor = A(i, col);
      if (factor != 0.0) {
        A.row(i) -= factor * A.row(row);
        b[i] -= factor * b[row];
      }
    }
    is_basic[basis[row]] = 0;
    is_basic[col] = 1;
    basis[row] = col;
  }

  LpResult::Status minimize(const Vector& cost, int max_iter) {
    const int m = static_cast<int>(A.rows());
    const int cols = static_cast<int>(A.cols());
    while (iterations < max_iter) {
      Vector cb(m);
      for (int i = 0; i < m; ++i) cb[i] = cost[basis[i]];
      int enter = -1;
      for (int j = 0; j < std::min(cols, blocked_from); ++j) {
        if (is_basic[j]) continue;
        if (cost[j] - cb.dot(A.col(j)) < -1e-9) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return LpResult::Status::optimal;
      int leave = -1;
      double best = kInf;
      for (int i = 0; i < m; ++i) {
        if (A(i, enter) <= 1e-9) continue;
        const double ratio = b[i] / A(i, enter);
        if (ratio < best - 1e-12) {
          best = ratio;
          leave = i;
        } else if (ratio < best + 1e-12 && leave >= 0 && basis[i] < basis[leave]) {
          leave = i;
        }
      }
      if (leave < 0) return LpResult::Status::unbounded;
      pivot(leave, enter);
      ++iterations;
    }
    throw std::runtime_error("simplex iteration cap exceeded");
  }

  double objective(const Vector& cost) const {
    double val = 0.0;
    for (size_t i = 0; i < basis.size(); ++i) val += cost[basis[i]] * b[i];
    return val;
  }
};

}  // namespace

LpResult lp_simplex(const Vector& cost, const Polyhedron& poly) {
  const int n = poly.dim();
  if (!poly.box.bounded())
    throw std::invalid_argument("lp_simplex requires finite box bounds on every coordinate");
  if (((poly.box.ub - poly.box.lb).array() < 0).any()) return {};  // empty box: infeasible

  const int m1 = static_cast<int>(poly.H1.rows());
  const int m2 = static_cast<int>(poly.H2.rows());
  const Vector shift = poly.box.lb;
  const Vector span = poly.box.ub - poly.box.lb;

  // Variables (w, s1, s2) >= 0 with w = v - lb, inequality slacks s1 and box
  // slacks s2 (w + s2 = ub - lb).
  const int nvar = n + m1 + n;
  const int m = m1 + m2 + n;
  Matrix A = Matrix::Zero(m, nvar + m);
  Vector b(m);
  if (m1 > 0) {
    A.block(0, 0, m1, n) = poly.H1;
    A.block(0, n, m1, m1).setIdentity();
    b.head(m1) = poly.h1 - poly.H1 * shift;
  }
  if (m2 > 0) {
    A.block(m1, 0, m2, n) = poly.H2;
    b.segment(m1, m2) = poly.h2 - poly.H2 * shift;
  }
  A.block(m1 + m2, 0, n, n).setIdentity();
  A.block(m1 + m2, n + m1, n, n).setIdentity();
  b.tail(n) = span;
  for (int i = 0; i < m; ++i) {
    if (b[i] < 0.0) {
      A.row(i) *= -1.0;
      b[i] *= -1.0;
    }
  }
  A.block(0, nvar, m, m).setIdentity();  // artificial columns

  Tableau t;
  t.A = std::move(A);
  t.b = std::move(b);
  t.basis.resize(m);
  t.is_basic.assign(nvar + m, 0);
  for (int i = 0; i < m; ++i) {
    t.basis[i] = nvar + i;
    t.is_basic[nvar + i] = 1;
  }
  t.blocked_from = nvar + m;
  const int max_iter = 50000 + 200 * (m + nvar);

  Vector phase1 = Vector::Zero(nvar + m);
  phase1.tail(m).setOnes();
  LpResult result;
  if (t.minimize(phase1, max_iter) != LpResult::Status::optimal) return result;
  const double scale = std::max(1.0, t.b.size() > 0 ? t.b.cwiseAbs().maxCoeff() : 1.0);
  if (t.objective(phase1) > 1e-9 * scale) {
    result.status = LpResult::Status::infeasible;
    result.iterations = t.iterations;
    return result;
  }
  // Pivot surviving artificials out where possible; rows that admit no pivot
  // are redundant and keep a zero-valued artificial that can never re-enter.
  for (int i = 0; i < m; ++i) {
    if (t.basis[i] < nvar) continue;
    for (int j = 0; j < nvar; ++j) {
      if (!t.is_basic[j] && std::abs(t.A(i, j)) > 1e-7) {
        t.pivot(i, j);
        break;
      }
    }
  }
  t.blocked_from = nvar;

  Vector phase2 = Vector::Zero(nvar + m);
  phase2.head(n) = cost;
  const LpResult::Status status = t.minimize(phase2, max_iter);
  result.status = status;
  result.iterations = t.iterations;
  if (status != LpResult::Status::optimal) return result;

  Vector w = Vector::Zero(nvar);
  for (int i = 0; i < m; ++i) {
    if (t.basis[i] < nvar) w[t.basis[i]] = t.b[i];
  }
  result.x = w.head(n) + shift;
  result.value = cost.dot(result.x);
  const double residual = poly.max_violation(result.x);
  if (residual > 1e-9 * std::max(1.0, result.x.cwiseAbs().maxCoeff())) {
    log::info("simplex feasibility residual ", residual, " above target");
  }
  return result;
}

FeasibilityCertificate feasibility_check(const ConvexSet& set) {
  FeasibilityCertificate cert;
  if (is_box(set)) {
    const Box& box = std::get<Box>(set);
    if (((box.ub - box.lb).array() < 0).any()) return cert;
    cert.feasible = true;
    cert.anchor.resize(box.dim());
    double slack = kInf;
    for (int i = 0; i < box.dim(); ++i) {
      const bool lo = std::isfinite(box.lb[i]), hi = std::isfinite(box.ub[i]);
      if (lo && hi) {
        cert.anchor[i] = 0.5 * (box.lb[i] + box.ub[i]);
        slack = std::min(slack, 0.5 * (box.ub[i] - box.lb[i]));
      } else if (lo) {
        cert.anchor[i] = box.lb[i] + 1.0;
      } else if (hi) {
        cert.anchor[i] = box.ub[i] - 1.0;
      } else {
        cert.anchor[i] = 0.0;
      }
    }
    cert.min_slack = slack;
    cert.strict = slack > 0.0;
    cert.max_violation = 0.0;
    return cert;
  }

  // Maximize the uniform inequality slack delta in [0,1] over the set; the
  // extended LP is feasible exactly when the polyhedron is nonempty, and the
  // optimizer is an interior anchor whenever delta can be made positive.
  const Polyhedron& poly = std::get<Polyhedron>(set);
  const int n = poly.dim();
  const int m1 = static_cast<int>(poly.H1.rows());
  const int m2 = static_cast<int>(poly.H2.rows());
  Polyhedron ext;
  ext.H1.resize(m1, n + 1);
  if (m1 > 0) {
    ext.H1 << poly.H1, Vector::Ones(m1);
    ext.h1 = poly.h1;
  } else {
    ext.h1.resize(0);
  }
  ext.H2.resize(m2, n + 1);
  if (m2 > 0) {
    ext.H2 << poly.H2, Vector::Zero(m2);
    ext.h2 = poly.h2;
  } else {
    ext.h2.resize(0);
  }
  ext.box.lb.resize(n + 1);
  ext.box.ub.resize(n + 1);
  ext.box.lb << poly.box.lb, 0.0;
  ext.box.ub << poly.box.ub, 1.0;
  Vector cost = Vector::Zero(n + 1);
  cost[n] = -1.0;
  const LpResult lp = lp_simplex(cost, ext);
  if (lp.status != LpResult::Status::optimal) return cert;
  cert.feasible = true;
  cert.anchor = lp.x.head(n);
  cert.strict = lp.x[n] > 1e-9;
  cert.max_violation = poly.max_violation(cert.anchor);
  cert.min_slack = m1 > 0 ? (poly.h1 - poly.H1 * cert.anchor).minCoeff() : kInf;
  return cert;
}

std::pair<Vector, double> linear_min_over_box(const Vector& coeff, const Box& box) {
  Vector v(box.dim());
  for (int i = 0; i < box.dim(); ++i) {
    double pick = coeff[i] < 0.0 ? box.ub[i] : box.lb[i];
    if (!std::isfinite(pick)) {
      if (coeff[i] != 0.0)
        throw std::invalid_argument("linear objective unbounded over the given box");
      pick = std::isfinite(box.lb[i]) ? box.lb[i] : (std::isfinite(box.ub[i]) ? box.ub[i] : 0.0);
    }
    v[i] = pick;
  }
  return {v, coeff.dot(v)};
}

namespace {

Vector interior_start(const ConvexSet& set) {
  if (const Polyhedron* poly = std::get_if<Polyhedron>(&set)) {
    if (poly->anchor) return *poly->anchor;
  }
  const Box& bb = bounding_box(set);
  Vector v(bb.dim());
  for (int i = 0; i < bb.dim(); ++i) {
    const bool lo = std::isfinite(bb.lb[i]), hi = std::isfinite(bb.ub[i]);
    if (lo && hi)
      v[i] = 0.5 * (bb.lb[i] + bb.ub[i]);
    else if (lo)
      v[i] = bb.lb[i];
    else if (hi)
      v[i] = bb.ub[i];
    else
      v[i] = 0.0;
  }
  return v;
}

}  // namespace

LowerLevelResult lower_level_solve(const MinimaxBilevelProblem& problem, const Vector& lambda,
                                   double tol) {
  LowerLevelResult res;
  const int dy = problem.dims.dy;

  if (problem.g_linear_in_z) {
    const Vector coeff = eval_g_grads(problem, Vector::Zero(dy), lambda).z;
    if (is_box(problem.setY)) {
      res.z = linear_min_over_box(coeff, std::get<Box>(problem.setY)).first;
    } else {
      const LpResult lp = lp_simplex(coeff, std::get<Polyhedron>(problem.setY));
      if (lp.status != LpResult::Status::optimal)
        throw std::runtime_error("lower-level linear program has no optimum");
      res.z = lp.x;
      res.iterations = lp.iterations;
    }
    res.value = eval_g(problem, res.z, lambda);
    res.converged = true;
    return res;
  }

  const double L = problem.g.lipschitz_grad;
  if (!(L > 0.0))
    throw std::invalid_argument("smooth lower-level solve needs a positive Lipschitz constant");
  const double step = 1.0 / L;
  const ProjectionSettings ps;
  constexpr int kMaxIter = 200000;

  // Accelerated projected gradient with function-value restart; the stopping
  // quantity is the gradient-mapping norm at the extrapolated point, which
  // bounds suboptimality through strong smoothness.
  Vector z = project(problem.setY, interior_start(problem.setY), ps);
  Vector z_prev = z;
  double t_cur = 1.0;
  double f_cur = eval_g(problem, z, lambda);
  double mapping = kInf;
  for (int iter = 1; iter <= kMaxIter; ++iter) {
    double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_cur * t_cur));
    const Vector w = z + ((t_cur - 1.0) / t_next) * (z - z_prev);
    Vector gz = eval_g_grads(problem, w, lambda).z;
    Vector z_new = project(problem.setY, w - step * gz, ps);
    double f_new = eval_g(problem, z_new, lambda);
    mapping = (w - z_new).norm() / step;
    if (f_new > f_cur) {  // momentum restart keeps the sequence monotone
      t_next = 1.0;
      gz = eval_g_grads(problem, z, lambda).z;
      z_new = project(problem.setY, z - step * gz, ps);
      f_new = eval_g(problem, z_new, lambda);
      mapping = (z - z_new).norm() / step;
    }
    z_prev = std::move(z);
    z = std::move(z_new);
    f_cur = f_new;
    t_cur = t_next;
    res.iterations = iter;
    if (mapping <= tol) {
      res.converged = true;
      break;
    }
  }
  res.z = z;
  res.value = f_cur;
  res.residual = mapping;
  if (!res.converged)
    log::info("lower-level solve hit the iteration cap with mapping norm ", mapping);
  return res;
}

}  // namespace mmbo
