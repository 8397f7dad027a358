#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmbo/penalty.hpp"

namespace mmbo {

// Termination thresholds checked after every outer iteration. The run stops
// once the penalty weight has reached rho_cap AND the composite error and
// |lower-level gap| are below their tolerances (plus the relative x-step
// test when enabled); max_outer always caps the run.
struct StoppingRule {
  int max_outer = 200;
  double rho_cap = 1e4;
  double error_tol = 1e-4;
  double lower_gap_tol = 1e-6;
  std::optional<double> rel_x_tol;  // ||x_k - x_{k-1}|| / max(1, ||x_k||)
};

enum class InitScheme {
  BoxUniformLowerZ,  // x,y,lambda uniform in boxes; u,v standard normal; z from the lower level
  AllNormal,         // every block standard normal, feasible blocks projected
};

struct SolverConfig {
  PenaltyParams params;    // rho is the schedule's starting weight
  int T = 20;              // inner ascent steps per outer iteration
  int K = 200;             // outer iteration budget
  bool accelerated = false;
  std::optional<double> theta_override;  // inner momentum; default from the formula
  StoppingRule stopping;
  std::uint64_t seed = 0;
  double rho_growth = 5.0;  // rho_k = min(rho * growth^k, rho_cap); 1 keeps rho fixed
  bool auto_tau = true;     // per-iteration tau = tau_factor * L_P(rho_k), kappa = tau - L_P
  double tau_factor = 2.0;
  InitScheme init = InitScheme::BoxUniformLowerZ;
  double lower_level_tol = 1e-8;          // accuracy of the lower-gap diagnostic
  std::optional<AugmentedPoint> start;    // overrides the seeded initialization
};

struct SolverState {
  Vector x, y, lambda, z, u, v;
  int k = 0;
};

AugmentedPoint to_augmented(const SolverState& s);

struct IterateRecord {
  int k = 0;
  double rho = 0.0;
  double f_value = 0.0;
  double p_rho_value = 0.0;
  double gap_x = 0.0, gap_y = 0.0, gap_lambda = 0.0, gap_z = 0.0;
  double error = 0.0;      // stacked norm of the four gap vectors
  double lower_gap = 0.0;  // g(y, lambda) - min_z g(z, lambda)
  double elapsed_ms = 0.0;
};

enum class StopReason { Converged, MaxOuter, NonFinite };

struct SolverTrace {
  std::vector<IterateRecord> records;   // records[0] is the initial state
  std::vector<SolverState> states;      // one per record, same indexing
  SolverState final_state;
  StopReason reason = StopReason::MaxOuter;
  long total_inner_steps = 0;
  double wall_ms = 0.0;
};

// T Jacobi-style projected ascent steps on the surrogate's inner block from
// (state.y, state.lambda), outer block frozen. Accelerated mode extrapolates
// with theta = (1 - sqrt(kappa alpha_y)) / (1 + sqrt(kappa alpha_y)) (clamped
// at 0 when kappa alpha_y >= 1) and resets momentum on entry.
struct InnerResult {
  Vector y, lambda;
};
InnerResult inner_ascent(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                         const SolverState& state, int T, bool accelerated,
                         std::optional<double> theta_override = std::nullopt);

// Same iteration with every intermediate iterate recorded (index 0 is the
// starting point), for rate measurements.
struct InnerTrace {
  std::vector<Vector> y, lambda;
};
InnerTrace inner_ascent_traced(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                               const SolverState& state, int T, bool accelerated,
                               std::optional<double> theta_override = std::nullopt);

// Descent step on the outer block at the refreshed inner block:
// x+ = proj_X(x - alpha_x grad_x f), z+ = proj_Y(z - alpha_x rho grad_z g),
// u+ = (1 + alpha_x tau) u - alpha_x tau y+, v+ likewise with lambda+.
struct OuterResult {
  Vector x, z, u, v;
};
OuterResult outer_step(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                       const SolverState& state, const Vector& y_next, const Vector& lambda_next);

SolverTrace pg_mad(const MinimaxBilevelProblem& p, const SolverConfig& config);
SolverTrace na_pg_mad(const MinimaxBilevelProblem& p, const SolverConfig& config);

// One solve per schedule stage at fixed rho, warm-started from the previous
// terminal state with (u, v) reset to (y, lambda); each stage stops on its
// own stationarity tolerance (the lower-gap test is deferred to the last
// stage's rho).
struct ContinuationStage {
  double rho = 1.0;
  double eps = 1e-4;
};
SolverTrace penalty_continuation(const MinimaxBilevelProblem& p,
                                 const std::vector<ContinuationStage>& schedule,
                                 const SolverConfig& config);

void write_trace_csv(const std::vector<IterateRecord>& records, const std::string& path);

// Inner/outer iteration budgets sufficient for an eps-stationary point, per
// the convergence analysis. delta_theta is theta at the start minus the
// penalty's lower bound; omega1 bounds the per-iteration inner suboptimality.
struct BudgetInputs {
  double eps = 1e-4;
  double kappa = 1.0;
  double alpha_x = 0.1;
  double alpha_y = 0.1;
  double omega1 = 1.0;
  double L_P = 1.0;
  double tau = 2.0;
  double L_theta = 1.0;
  double delta_theta = 1.0;
};
struct BudgetResult {
  double nu = 0.0;
  double T_bound = 0.0;
  double K_bound = 0.0;
  long T = 0;
  long K = 0;
};
BudgetResult theory_budget(const BudgetInputs& in, bool accelerated);

// Largest observed inner suboptimality theta(outer) - Q(point) over the
// supplied iterates; an estimate, not a certified bound.
double estimate_omega1(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                       const std::vector<SolverState>& states, double inner_tol = 1e-10);

}  // namespace mmbo
