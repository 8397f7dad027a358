#include "mmbo/model.hpp"

#include <cmath>
#include <stdexcept>

#include "mmbo/rng.hpp"

namespace mmbo {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void check_dims(const MinimaxBilevelProblem& p, const Vector& x, const Vector& y,
                const Vector& lam) {
  require(x.size() == p.dims.dx && y.size() == p.dims.dy && lam.size() == p.dims.dl,
          "point dimensions do not match the problem");
}

}  // namespace

MinimaxBilevelProblem build_linear_problem(const LinearProblemData& data) {
  require(data.dims.dx > 0 && data.dims.dy > 0 && data.dims.dl > 0, "dimensions must be positive");
  require(data.c1.size() == data.dims.dx && data.c2.size() == data.dims.dy,
          "cost vector shape mismatch");
  require(data.A.rows() == data.dims.dl && data.A.cols() == data.dims.dx,
          "coupling matrix A shape mismatch");
  require(data.B.rows() == data.dims.dl && data.B.cols() == data.dims.dy,
          "coupling matrix B shape mismatch");
  require(data.b.size() == data.dims.dl, "coupling offset shape mismatch");
  require(set_dim(data.setX) == data.dims.dx && set_dim(data.setY) == data.dims.dy &&
              set_dim(data.setLambda) == data.dims.dl,
          "set dimension mismatch");

  MinimaxBilevelProblem p;
  p.dims = data.dims;
  const int dx = data.dims.dx, dy = data.dims.dy, dl = data.dims.dl;
  const Vector c1 = data.c1, c2 = data.c2;
  p.fbar.value = [c1, dx](const Vector& xy) { return c1.dot(xy.head(dx)); };
  p.fbar.gradient = [c1, dx, dy](const Vector& xy) {
    (void)xy;
    Vector grad = Vector::Zero(dx + dy);
    grad.head(dx) = c1;
    return grad;
  };
  p.fbar.lipschitz_grad = 0.0;
  p.A = data.A;
  p.B = data.B;
  p.c = data.b;
  p.g.value = [c2, dy](const Vector& zl) {
    return c2.dot(zl.head(dy)) + zl.tail(zl.size() - dy).dot(zl.head(dy));
  };
  p.g.gradient = [c2, dy, dl](const Vector& zl) {
    Vector grad(dy + dl);
    grad.head(dy) = c2 + zl.tail(dl);
    grad.tail(dl) = zl.head(dy);
    return grad;
  };
  // The only curvature of g is the bilinear lambda^T z cross block, whose
  // Hessian [[0, I], [I, 0]] has spectral norm 1.
  p.g.lipschitz_grad = 1.0;
  SecondOrderOracle so;
  so.hess_yy = [dy](const Vector&, const Vector&) { return Matrix::Zero(dy, dy); };
  so.hess_lambda_y = [dy, dl](const Vector&, const Vector&) {
    return Matrix::Identity(dl, dy);
  };
  so.strong_convexity_nu = 0.0;
  p.second_order = std::move(so);
  p.setX = data.setX;
  p.setY = data.setY;
  p.setLambda = data.setLambda;
  p.g_linear_in_z = true;
  p.fbar_class = ObjectiveClass::Multilinear;
  p.g_class = ObjectiveClass::Multilinear;

  for (const ConvexSet* set : {&p.setX, &p.setY, &p.setLambda}) {
    if (!is_box(*set) && !std::get<Polyhedron>(*set).anchor) {
      const FeasibilityCertificate cert = feasibility_check(*set);
      require(cert.feasible, "generated set is infeasible");
    }
  }
  return p;
}

double eval_f(const MinimaxBilevelProblem& p, const Vector& x, const Vector& y,
              const Vector& lam) {
  check_dims(p, x, y, lam);
  Vector xy(p.dims.dx + p.dims.dy);
  xy << x, y;
  return p.fbar.value(xy) + lam.dot(p.A * x + p.B * y - p.c);
}

FGrads eval_f_grads(const MinimaxBilevelProblem& p, const Vector& x, const Vector& y,
                    const Vector& lam) {
  check_dims(p, x, y, lam);
  Vector xy(p.dims.dx + p.dims.dy);
  xy << x, y;
  const Vector gbar = p.fbar.gradient(xy);
  FGrads g;
  g.x = gbar.head(p.dims.dx) + p.A.transpose() * lam;
  g.y = gbar.tail(p.dims.dy) + p.B.transpose() * lam;
  g.lam = p.A * x + p.B * y - p.c;
  return g;
}

double eval_g(const MinimaxBilevelProblem& p, const Vector& z, const Vector& lam) {
  require(z.size() == p.dims.dy && lam.size() == p.dims.dl, "lower-level point shape mismatch");
  Vector zl(p.dims.dy + p.dims.dl);
  zl << z, lam;
  return p.g.value(zl);
}

GGrads eval_g_grads(const MinimaxBilevelProblem& p, const Vector& z, const Vector& lam) {
  require(z.size() == p.dims.dy && lam.size() == p.dims.dl, "lower-level point shape mismatch");
  Vector zl(p.dims.dy + p.dims.dl);
  zl << z, lam;
  const Vector grad = p.g.gradient(zl);
  return {grad.head(p.dims.dy), grad.tail(p.dims.dl)};
}

LipschitzConstants lipschitz_constants(const MinimaxBilevelProblem& p, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("penalty weight must be positive");
  LipschitzConstants c;
  c.L_f = p.fbar.lipschitz_grad + spectral_norm(p.A) + spectral_norm(p.B);
  c.L_g = p.g.lipschitz_grad;
  c.L_P = c.L_f + 2.0 * rho * c.L_g;
  return c;
}

double spectral_norm(const Matrix& M) {
  if (M.rows() == 0 || M.cols() == 0) return 0.0;
  const Matrix MtM = M.transpose() * M;
  Rng rng(0x5eed5eedULL);
  Vector v = rng.normal_vector(static_cast<int>(M.cols()));
  v.normalize();
  double sigma_sq = 0.0;
  for (int it = 0; it < 100; ++it) {
    Vector w = MtM * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (std::abs(norm - sigma_sq) <= 1e-12 * std::max(1.0, norm)) {
      sigma_sq = norm;
      break;
    }
    sigma_sq = norm;
  }
  return std::sqrt(sigma_sq);
}

namespace {

// Visit every corner of the bounding boxes of `sets`; bails out (returns
// false) when the corner count would exceed 2^20.
template <typename Fn>
bool for_each_corner(const std::vector<const Box*>& boxes, Fn&& fn) {
  int total_bits = 0;
  for (const Box* b : boxes) {
    if (!b->bounded()) return false;
    total_bits += b->dim();
  }
  if (total_bits > 20) return false;
  const uint64_t corners = uint64_t{1} << total_bits;
  std::vector<Vector> point(boxes.size());
  for (uint64_t mask = 0; mask < corners; ++mask) {
    int bit = 0;
    for (size_t s = 0; s < boxes.size(); ++s) {
      point[s].resize(boxes[s]->dim());
      for (int i = 0; i < boxes[s]->dim(); ++i, ++bit)
        point[s][i] = (mask >> bit) & 1 ? boxes[s]->ub[i] : boxes[s]->lb[i];
    }
    fn(point);
  }
  return true;
}

}  // namespace

BoundEstimates estimate_bounds(const MinimaxBilevelProblem& p, int n_samples, uint64_t seed) {
  require(n_samples >= 1, "need at least one sample");
  const Box& bx = bounding_box(p.setX);
  const Box& by = bounding_box(p.setY);
  const Box& bl = bounding_box(p.setLambda);
  require(bx.bounded() && by.bounded() && bl.bounded(), "bound estimation needs bounded sets");

  BoundEstimates out;
  double f_hi = -std::numeric_limits<double>::infinity(), f_low = -f_hi;
  double g_hi = f_hi, g_low = f_low;

  const bool f_corners = for_each_corner({&bx, &by, &bl}, [&](const std::vector<Vector>& pt) {
    const double v = eval_f(p, pt[0], pt[1], pt[2]);
    f_hi = std::max(f_hi, v);
    f_low = std::min(f_low, v);
  });
  const bool g_corners = for_each_corner({&by, &bl}, [&](const std::vector<Vector>& pt) {
    const double v = eval_g(p, pt[0], pt[1]);
    g_hi = std::max(g_hi, v);
    g_low = std::min(g_low, v);
  });
  out.corners_enumerated = f_corners && g_corners;

  Rng rng(seed);
  const ProjectionSettings ps;
  for (int s = 0; s < n_samples; ++s) {
    Vector x(bx.dim()), y(by.dim()), lam(bl.dim());
    for (int i = 0; i < bx.dim(); ++i) x[i] = rng.uniform(bx.lb[i], bx.ub[i]);
    for (int i = 0; i < by.dim(); ++i) y[i] = rng.uniform(by.lb[i], by.ub[i]);
    for (int i = 0; i < bl.dim(); ++i) lam[i] = rng.uniform(bl.lb[i], bl.ub[i]);
    x = project(p.setX, x, ps);
    y = project(p.setY, y, ps);
    lam = project(p.setLambda, lam, ps);
    const double fv = eval_f(p, x, y, lam);
    const double gv = eval_g(p, y, lam);
    f_hi = std::max(f_hi, fv);
    f_low = std::min(f_low, fv);
    g_hi = std::max(g_hi, gv);
    g_low = std::min(g_low, gv);
  }
  out.samples = n_samples;
  out.f_hi = f_hi;
  out.f_low = f_low;
  out.g_hi = g_hi;
  out.g_low = g_low;

  // Corner scans are exact only over plain boxes: the max needs convexity in
  // (x,y) (quadratic or multilinear fbar plus the bilinear coupling), the min
  // needs per-coordinate linearity throughout.
  const bool boxes_f = is_box(p.setX) && is_box(p.setY) && is_box(p.setLambda);
  const bool boxes_g = is_box(p.setY) && is_box(p.setLambda);
  const bool f_corner_max = p.fbar_class != ObjectiveClass::General;
  const bool g_corner_max = p.g_class != ObjectiveClass::General;
  out.f_hi_exact = f_corners && boxes_f && f_corner_max;
  out.f_low_exact = f_corners && boxes_f && p.fbar_class == ObjectiveClass::Multilinear;
  out.g_hi_exact = g_corners && boxes_g && g_corner_max;
  out.g_low_exact = g_corners && boxes_g && p.g_class == ObjectiveClass::Multilinear;
  return out;
}

}  // namespace mmbo
