#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "mmbo/model.hpp"
#include "mmbo/solver.hpp"

namespace mmbo {

// Small closed-form benchmark problems with analytic curvature oracles:
//   ex61: f = y^2 + lambda (x + y - 1),      g = z^2/2 + lambda z, sets [0,1]
//   ex62: f = x^2 + y^2 + lambda (x + y - 2), g = z^2 + lambda z,
//         x,y in [-1,1], lambda in [-2,2]
//   ex63: f = ||x||^2 + ||y||^2 + lambda^T (x + y), g = 2||z||^2 - 4 lambda^T z,
//         all sets [-1,1]^2
MinimaxBilevelProblem builtin_example(const std::string& id);

struct LinearGenOptions {
  double noise_sd = 0.1;  // spread of the inequality offset disturbance
  int max_attempts = 8;   // regeneration attempts on a degenerate draw
};

// Random minimax bilevel linear instance: standard-normal costs, coupling
// and constraint matrices normal(-1, 2), and each polyhedral set built
// around a drawn anchor (inequality offsets biased by +0.5 plus noise,
// equality offsets exact). Deterministic in the seed; degenerate draws are
// regenerated with an incremented seed and logged.
std::pair<MinimaxBilevelProblem, LinearProblemData> gen_linear_instance(
    const Dims& dims, std::uint64_t seed, const LinearGenOptions& options = {});

// A small continuous economic-dispatch market: the upper level schedules two
// generators plus an exchange with a microgrid under a balance equality, the
// lower level is the microgrid's linear cost, and the multipliers price the
// exchange-consistency and microgrid-balance coupling rows. Loads default to
// (2.0, 0.6) and may be overridden (zero loads give a problem whose lower
// level is minimized at the origin).
MinimaxBilevelProblem dispatch_lite(std::uint64_t seed,
                                    std::optional<std::pair<double, double>> loads = std::nullopt);

struct OracleResult {
  double phi_star = 0.0;
  Vector x_argmin;
  int resolution = 0;
  double certified_gap = 0.0;  // NaN when the lower level is not strongly convex
  double feasibility_tol = 0.0;
  long points_evaluated = 0;
};

// Brute-force estimate of the pessimistic optimum min_x max_{(y,lambda)} f
// over the grid, keeping only (y, lambda) pairs whose lower-level gap is at
// most feasibility_tol. Grid sizes are res^dx + res^(dy+dl) points and must
// stay within 1e7. The certified gap combines the observed gradient bound
// with the cell diagonals and the feasible-manifold widening sqrt(2 tol/nu).
OracleResult grid_oracle(const MinimaxBilevelProblem& p, int resolution,
                         double feasibility_tol = 1e-2);

struct ExperimentConfig {
  std::string problem = "builtin:ex62";  // builtin id or path to a problem JSON
  std::string solver = "pgmad";          // "pgmad" or "napgmad"
  SolverConfig config;
  std::string out_dir;
  int repetitions = 1;
  double eps = 1e-4;  // threshold for the terminal KKT report
  bool write_plot_data = true;
};

// Runs the configured solver (seeds seed, seed+1, ... across repetitions),
// writing trace CSV, gnuplot-ready two-column .dat files, and a summary JSON
// with the terminal KKT report per run. Returns 0 on success, 1 on solver
// failure (non-finite abort), 2 on I/O failure.
int run_experiment(const ExperimentConfig& config);

}  // namespace mmbo
