#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <variant>

namespace mmbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct MinimaxBilevelProblem;

// Coordinate-wise bounds lb <= v <= ub. Entries may be +-inf for unbounded
// coordinates; most callers require a bounded box and say so.
struct Box {
  Vector lb, ub;

  int dim() const { return static_cast<int>(lb.size()); }
  bool bounded() const;
  double max_violation(const Vector& v) const;
  bool contains(const Vector& v, double tol = 1e-12) const { return max_violation(v) <= tol; }
};

// { v : H1 v <= h1, H2 v = h2, v in box }. H1/H2 may have zero rows.
// `anchor` is a feasibility witness, stored by generators and by
// feasibility_check so later calls need not redo the phase-1 work.
struct Polyhedron {
  Matrix H1;
  Vector h1;
  Matrix H2;
  Vector h2;
  Box box;
  std::optional<Vector> anchor;

  int dim() const { return box.dim(); }
  double max_violation(const Vector& v) const;
};

using ConvexSet = std::variant<Box, Polyhedron>;

int set_dim(const ConvexSet& set);
const Box& bounding_box(const ConvexSet& set);
double set_violation(const ConvexSet& set, const Vector& v);
bool is_box(const ConvexSet& set);

struct ProjectionSettings {
  int max_sweeps = 10000;
  double tol = 1e-10;
};

// Euclidean projection. Boxes clamp coordinate-wise (exact); polyhedra run
// Dykstra's alternating projections over the half-space rows, the affine
// equality block (closed form via QR), and the box. Throws on
// non-convergence within max_sweeps.
Vector project(const Box& box, const Vector& v);
Vector project(const ConvexSet& set, const Vector& v, const ProjectionSettings& settings = {});

struct FeasibilityCertificate {
  bool feasible = false;
  bool strict = false;  // every inequality row holds with positive slack
  Vector anchor;        // meaningful only when feasible
  double max_violation = 0.0;
  double min_slack = 0.0;  // over inequality rows, at the anchor
};

// Phase-1 verdict. For polyhedra the anchor maximizes the uniform
// inequality slack (capped at 1) subject to the equalities and box, which
// yields a strictly feasible point whenever one exists.
FeasibilityCertificate feasibility_check(const ConvexSet& set);

struct LpResult {
  enum class Status { optimal, infeasible, unbounded };
  Status status = Status::infeasible;
  Vector x;
  double value = 0.0;
  int iterations = 0;
};

// Dense two-phase simplex with Bland's rule, min cost^T v over poly.
// Requires a bounded box (rows of the tableau come from it).
LpResult lp_simplex(const Vector& cost, const Polyhedron& poly);

// argmin of coeff^T v over a box: lb where coeff > 0, ub where coeff < 0,
// ties (coeff == 0) go to lb so results are reproducible.
std::pair<Vector, double> linear_min_over_box(const Vector& coeff, const Box& box);

struct LowerLevelResult {
  Vector z;
  double value = 0.0;
  double residual = 0.0;  // gradient-mapping norm (smooth path) or constraint residual (LP path)
  int iterations = 0;
  bool converged = false;
};

// min_z g(z, lambda) over the problem's y-set. Linear g dispatches to the
// closed-form box rule or the simplex; smooth convex g runs accelerated
// projected gradient with function-value restart, step 1/L_g, stopping when
// the gradient-mapping norm falls below tol.
LowerLevelResult lower_level_solve(const MinimaxBilevelProblem& problem, const Vector& lambda,
                                   double tol);

}  // namespace mmbo
