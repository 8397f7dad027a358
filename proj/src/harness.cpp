#include "mmbo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "mmbo/io.hpp"
#include "mmbo/log.hpp"
#include "mmbo/rng.hpp"
#include "mmbo/stationarity.hpp"

namespace mmbo {

namespace {

Box interval_box(int dim, double lo, double hi) {
  Box box;
  box.lb = Vector::Constant(dim, lo);
  box.ub = Vector::Constant(dim, hi);
  return box;
}

SecondOrderOracle constant_curvature(Matrix hyy, Matrix hly, double nu) {
  SecondOrderOracle oracle;
  oracle.hess_yy = [hyy](const Vector&, const Vector&) { return hyy; };
  oracle.hess_lambda_y = [hly](const Vector&, const Vector&) { return hly; };
  oracle.strong_convexity_nu = nu;
  return oracle;
}

}  // namespace

MinimaxBilevelProblem builtin_example(const std::string& id) {
  MinimaxBilevelProblem p;
  if (id == "ex61") {
    p.dims = {1, 1, 1};
    p.fbar.value = [](const Vector& xy) { return xy[1] * xy[1]; };
    p.fbar.gradient = [](const Vector& xy) {
      Vector g(2);
      g << 0.0, 2.0 * xy[1];
      return g;
    };
    p.fbar.lipschitz_grad = 2.0;
    p.A = Matrix::Constant(1, 1, 1.0);
    p.B = Matrix::Constant(1, 1, 1.0);
    p.c = Vector::Constant(1, 1.0);
    p.g.value = [](const Vector& zl) { return 0.5 * zl[0] * zl[0] + zl[1] * zl[0]; };
    p.g.gradient = [](const Vector& zl) {
      Vector g(2);
      g << zl[0] + zl[1], zl[0];
      return g;
    };
    // norm of [[1,1],[1,0]]
    p.g.lipschitz_grad = (1.0 + std::sqrt(5.0)) / 2.0;
    p.setX = interval_box(1, 0.0, 1.0);
    p.setY = interval_box(1, 0.0, 1.0);
    p.setLambda = interval_box(1, 0.0, 1.0);
    p.second_order =
        constant_curvature(Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0), 1.0);
  } else if (id == "ex62") {
    p.dims = {1, 1, 1};
    p.fbar.value = [](const Vector& xy) { return xy[0] * xy[0] + xy[1] * xy[1]; };
    p.fbar.gradient = [](const Vector& xy) { return Vector(2.0 * xy); };
    p.fbar.lipschitz_grad = 2.0;
    p.A = Matrix::Constant(1, 1, 1.0);
    p.B = Matrix::Constant(1, 1, 1.0);
    p.c = Vector::Constant(1, 2.0);
    p.g.value = [](const Vector& zl) { return zl[0] * zl[0] + zl[1] * zl[0]; };
    p.g.gradient = [](const Vector& zl) {
      Vector g(2);
      g << 2.0 * zl[0] + zl[1], zl[0];
      return g;
    };
    // norm of [[2,1],[1,0]]
    p.g.lipschitz_grad = 1.0 + std::sqrt(2.0);
    p.setX = interval_box(1, -1.0, 1.0);
    p.setY = interval_box(1, -1.0, 1.0);
    p.setLambda = interval_box(1, -2.0, 2.0);
    p.second_order =
        constant_curvature(Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 1.0), 2.0);
  } else if (id == "ex63") {
    p.dims = {2, 2, 2};
    p.fbar.value = [](const Vector& xy) { return xy.squaredNorm(); };
    p.fbar.gradient = [](const Vector& xy) { return Vector(2.0 * xy); };
    p.fbar.lipschitz_grad = 2.0;
    p.A = Matrix::Identity(2, 2);
    p.B = Matrix::Identity(2, 2);
    p.c = Vector::Zero(2);
    p.g.value = [](const Vector& zl) {
      return 2.0 * zl.head(2).squaredNorm() - 4.0 * zl.tail(2).dot(zl.head(2));
    };
    p.g.gradient = [](const Vector& zl) {
      Vector g(4);
      g.head(2) = 4.0 * zl.head(2) - 4.0 * zl.tail(2);
      g.tail(2) = -4.0 * zl.head(2);
      return g;
    };
    // norm of [[4,-4],[-4,0]] per coordinate pair
    p.g.lipschitz_grad = 2.0 + 2.0 * std::sqrt(5.0);
    p.setX = interval_box(2, -1.0, 1.0);
    p.setY = interval_box(2, -1.0, 1.0);
    p.setLambda = interval_box(2, -1.0, 1.0);
    p.second_order =
        constant_curvature(4.0 * Matrix::Identity(2, 2), -4.0 * Matrix::Identity(2, 2), 4.0);
  } else {
    throw std::invalid_argument("unknown builtin example: " + id);
  }
  p.fbar_class = ObjectiveClass::ConvexQuadratic;
  p.g_class = ObjectiveClass::ConvexQuadratic;
  return p;
}

namespace {

// One polyhedral set of the random linear family: square inequality and
// equality blocks built around a drawn anchor. The anchor's inequality slack
// is exactly 0.5 + noise per row, so min_slack > 0 holds unless the noise
// draw is extreme.
Polyhedron random_anchored_set(Rng rng, int dim, double lo, double hi, double noise_sd) {
  Polyhedron poly;
  poly.H1 = rng.normal_matrix(dim, dim, -1.0, 2.0);
  poly.H2 = rng.normal_matrix(dim, dim, -1.0, 2.0);
  poly.box = interval_box(dim, lo, hi);
  Vector anchor = project(poly.box, rng.normal_vector(dim));
  poly.h1 = poly.H1 * anchor + Vector::Constant(dim, 0.5) + rng.normal_vector(dim, 0.0, noise_sd);
  poly.h2 = poly.H2 * anchor;
  poly.anchor = anchor;
  return poly;
}

double anchor_min_slack(const Polyhedron& poly) {
  if (poly.H1.rows() == 0) return std::numeric_limits<double>::infinity();
  return (poly.h1 - poly.H1 * *poly.anchor).minCoeff();
}

}  // namespace

std::pair<MinimaxBilevelProblem, LinearProblemData> gen_linear_instance(
    const Dims& dims, std::uint64_t seed, const LinearGenOptions& options) {
  if (dims.dx <= 0 || dims.dy <= 0 || dims.dl <= 0)
    throw std::invalid_argument("gen_linear_instance: dims must be positive");
  if (dims.dy != dims.dl)
    throw std::invalid_argument(
        "gen_linear_instance: the lower-level coupling lambda^T z needs dy == dl");
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    Rng rng(seed + static_cast<std::uint64_t>(attempt));
    LinearProblemData data;
    data.dims = dims;
    data.c1 = rng.fork(0).normal_vector(dims.dx);
    data.c2 = rng.fork(1).normal_vector(dims.dy);
    data.A = rng.fork(2).normal_matrix(dims.dl, dims.dx, -1.0, 2.0);
    data.B = rng.fork(3).normal_matrix(dims.dl, dims.dy, -1.0, 2.0);
    data.b = rng.fork(4).normal_vector(dims.dl);
    Polyhedron sx = random_anchored_set(rng.fork(5), dims.dx, -5.0, 5.0, options.noise_sd);
    Polyhedron sy = random_anchored_set(rng.fork(6), dims.dy, -3.0, 3.0, options.noise_sd);
    Polyhedron sl = random_anchored_set(rng.fork(7), dims.dl, 0.0, 5.0, options.noise_sd);
    const double slack = std::min({anchor_min_slack(sx), anchor_min_slack(sy),
                                   anchor_min_slack(sl)});
    if (slack <= 1e-6) {
      log::info("gen_linear_instance: degenerate draw at seed ", seed + attempt,
                " (min anchor slack ", slack, "), regenerating");
      continue;
    }
    data.setX = std::move(sx);
    data.setY = std::move(sy);
    data.setLambda = std::move(sl);
    return {build_linear_problem(data), data};
  }
  throw std::runtime_error("gen_linear_instance: no non-degenerate draw within max_attempts");
}

MinimaxBilevelProblem dispatch_lite(std::uint64_t seed,
                                    std::optional<std::pair<double, double>> loads) {
  const auto [load_ds, load_mg] = loads.value_or(std::make_pair(2.0, 0.6));
  Rng rng(seed);
  LinearProblemData data;
  data.dims = {3, 2, 2};  // x = (gen1, gen2, exchange), y = (mg gen, mg import)
  Vector c1(3);
  c1 << 1.0, 1.5, 0.0;
  data.c1 = c1 + rng.normal_vector(3, 0.0, 0.05);
  Vector c2(2);
  c2 << 1.2, 0.8;
  data.c2 = c2 + rng.normal_vector(2, 0.0, 0.05);
  // Row 1 prices exchange consistency (exchange = import), row 2 the
  // microgrid balance (mg gen + import = mg load).
  data.A = Matrix::Zero(2, 3);
  data.A(0, 2) = 1.0;
  data.B.resize(2, 2);
  data.B << 0.0, -1.0, 1.0, 1.0;
  data.b.resize(2);
  data.b << 0.0, load_mg;

  Polyhedron sx;  // distribution-system balance: gen1 + gen2 - exchange = load
  sx.H1.resize(0, 3);
  sx.h1.resize(0);
  sx.H2.resize(1, 3);
  sx.H2 << 1.0, 1.0, -1.0;
  sx.h2 = Vector::Constant(1, load_ds);
  sx.box.lb.resize(3);
  sx.box.lb << 0.0, 0.0, -1.0;
  sx.box.ub.resize(3);
  sx.box.ub << 2.0, 1.5, 1.0;
  const FeasibilityCertificate cert = feasibility_check(sx);
  if (!cert.feasible)
    throw std::invalid_argument("dispatch_lite: loads make the upper-level set empty");
  sx.anchor = cert.anchor;
  data.setX = std::move(sx);

  Box sy;  // mg generator limit, import limit
  sy.lb = Vector::Zero(2);
  sy.ub.resize(2);
  sy.ub << 1.2, 1.0;
  data.setY = sy;
  data.setLambda = interval_box(2, 0.0, 5.0);
  return build_linear_problem(data);
}

namespace {

// Odometer over an n-dimensional grid with `res` ticks per axis.
struct GridIter {
  std::vector<int> digits;
  int res = 0;
  bool done = false;

  GridIter(int n, int res_) : digits(n, 0), res(res_), done(n == 0) {}

  void advance() {
    for (std::size_t i = 0; i < digits.size(); ++i) {
      if (++digits[i] < res) return;
      digits[i] = 0;
    }
    done = true;
  }
};

Vector grid_point(const Box& box, const std::vector<int>& digits, int res, int offset, int n) {
  Vector v(n);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(digits[offset + i]) / (res - 1);
    v[i] = box.lb[i] + t * (box.ub[i] - box.lb[i]);
  }
  return v;
}

double half_cell_diagonal(const Box& box, int res) {
  double sum = 0.0;
  for (int i = 0; i < box.dim(); ++i) {
    const double h = (box.ub[i] - box.lb[i]) / (res - 1);
    sum += h * h;
  }
  return 0.5 * std::sqrt(sum);
}

// Largest gradient norm of f over the bounding boxes; exact for objectives
// whose gradient is affine (norms of affine maps peak at corners), an
// estimate otherwise.
double observed_gradient_bound(const MinimaxBilevelProblem& p) {
  const Box& bx = bounding_box(p.setX);
  const Box& by = bounding_box(p.setY);
  const Box& bl = bounding_box(p.setLambda);
  const int n = p.dims.dx + p.dims.dy + p.dims.dl;
  double bound = 0.0;
  auto visit = [&](const Vector& x, const Vector& y, const Vector& lam) {
    const FGrads g = eval_f_grads(p, x, y, lam);
    const double norm =
        std::sqrt(g.x.squaredNorm() + g.y.squaredNorm() + g.lam.squaredNorm());
    bound = std::max(bound, norm);
  };
  if (n <= 20) {
    for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
      Vector x(p.dims.dx), y(p.dims.dy), lam(p.dims.dl);
      for (int i = 0; i < p.dims.dx; ++i) x[i] = (mask >> i) & 1 ? bx.ub[i] : bx.lb[i];
      for (int i = 0; i < p.dims.dy; ++i)
        y[i] = (mask >> (p.dims.dx + i)) & 1 ? by.ub[i] : by.lb[i];
      for (int i = 0; i < p.dims.dl; ++i)
        lam[i] = (mask >> (p.dims.dx + p.dims.dy + i)) & 1 ? bl.ub[i] : bl.lb[i];
      visit(x, y, lam);
    }
  } else {
    Rng rng(0x6f1d);
    for (int s = 0; s < 4096; ++s) {
      Vector x(p.dims.dx), y(p.dims.dy), lam(p.dims.dl);
      for (int i = 0; i < p.dims.dx; ++i) x[i] = rng.uniform(bx.lb[i], bx.ub[i]);
      for (int i = 0; i < p.dims.dy; ++i) y[i] = rng.uniform(by.lb[i], by.ub[i]);
      for (int i = 0; i < p.dims.dl; ++i) lam[i] = rng.uniform(bl.lb[i], bl.ub[i]);
      visit(x, y, lam);
    }
  }
  return bound;
}

}  // namespace

OracleResult grid_oracle(const MinimaxBilevelProblem& p, int resolution, double feasibility_tol) {
  if (resolution < 2) throw std::invalid_argument("grid_oracle: resolution must be >= 2");
  const int dx = p.dims.dx, dy = p.dims.dy, dl = p.dims.dl;
  const double n_x = std::pow(resolution, dx);
  const double n_yl = std::pow(resolution, dy + dl);
  if (n_x + n_yl > 1e7) throw std::invalid_argument("grid_oracle: grid budget of 1e7 exceeded");

  const Box& bx = bounding_box(p.setX);
  const Box& by = bounding_box(p.setY);
  const Box& bl = bounding_box(p.setLambda);

  // Lower-level values cached per lambda grid cell (lambda digits are the
  // trailing block of the (y, lambda) odometer, so they change slowest).
  std::vector<double> lower_value(static_cast<std::size_t>(std::pow(resolution, dl)),
                                  std::numeric_limits<double>::quiet_NaN());

  struct Survivor {
    Vector y, lam;
    Vector a;        // A^T lambda
    double offset;   // lambda^T (B y - c)
  };
  std::vector<Survivor> survivors;
  long points = 0;

  for (GridIter it(dy + dl, resolution); !it.done; it.advance()) {
    const Vector y = grid_point(by, it.digits, resolution, 0, dy);
    const Vector lam = grid_point(bl, it.digits, resolution, dy, dl);
    if (set_violation(p.setY, y) > 1e-9 || set_violation(p.setLambda, lam) > 1e-9) continue;
    std::size_t lam_key = 0;
    for (int i = dl - 1; i >= 0; --i) lam_key = lam_key * resolution + it.digits[dy + i];
    if (std::isnan(lower_value[lam_key]))
      lower_value[lam_key] = lower_level_solve(p, lam, 1e-10).value;
    ++points;
    if (eval_g(p, y, lam) - lower_value[lam_key] > feasibility_tol) continue;
    Survivor s;
    s.y = y;
    s.lam = lam;
    s.a = p.A.transpose() * lam;
    s.offset = lam.dot(p.B * y - p.c);
    survivors.push_back(std::move(s));
  }
  if (survivors.empty())
    throw std::runtime_error("grid_oracle: no (y, lambda) grid point is near-optimal; "
                             "raise feasibility_tol or the resolution");

  OracleResult result;
  result.resolution = resolution;
  result.feasibility_tol = feasibility_tol;
  result.phi_star = std::numeric_limits<double>::infinity();
  Vector xy(dx + dy);
  for (GridIter it(dx, resolution); !it.done; it.advance()) {
    const Vector x = grid_point(bx, it.digits, resolution, 0, dx);
    if (set_violation(p.setX, x) > 1e-9) continue;
    xy.head(dx) = x;
    double phi = -std::numeric_limits<double>::infinity();
    for (const Survivor& s : survivors) {
      xy.tail(dy) = s.y;
      const double value = p.fbar.value(xy) + s.a.dot(x) + s.offset;
      phi = std::max(phi, value);
      ++points;
    }
    if (phi < result.phi_star) {
      result.phi_star = phi;
      result.x_argmin = x;
    }
  }
  if (!std::isfinite(result.phi_star))
    throw std::runtime_error("grid_oracle: no feasible x grid point");
  result.points_evaluated = points;

  const double nu = p.second_order ? p.second_order->strong_convexity_nu : 0.0;
  if (nu > 0.0) {
    const double grad_bound = observed_gradient_bound(p);
    Box byl;
    byl.lb.resize(dy + dl);
    byl.ub.resize(dy + dl);
    byl.lb << by.lb, bl.lb;
    byl.ub << by.ub, bl.ub;
    result.certified_gap =
        grad_bound * (half_cell_diagonal(bx, resolution) + half_cell_diagonal(byl, resolution) +
                      std::sqrt(2.0 * feasibility_tol / nu));
  } else {
    result.certified_gap = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

namespace {

void write_plot_column(const std::vector<IterateRecord>& records, const std::string& path,
                       double IterateRecord::* field) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  char line[64];
  for (const IterateRecord& r : records) {
    std::snprintf(line, sizeof line, "%d %.17g\n", r.k, r.*field);
    out << line;
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

const char* reason_name(StopReason reason) {
  switch (reason) {
    case StopReason::Converged: return "converged";
    case StopReason::MaxOuter: return "max_outer";
    case StopReason::NonFinite: return "non_finite";
  }
  return "unknown";
}

}  // namespace

int run_experiment(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  if (!fs::exists(config.out_dir) || !fs::is_directory(config.out_dir)) {
    log::error("run_experiment: output directory does not exist: ", config.out_dir);
    return 2;
  }
  if (config.solver != "pgmad" && config.solver != "napgmad") {
    log::error("run_experiment: unknown solver \"", config.solver, "\"");
    return 2;
  }
  MinimaxBilevelProblem p;
  try {
    p = io::load_problem(config.problem);
  } catch (const std::exception& e) {
    log::error("run_experiment: cannot load problem: ", e.what());
    return 2;
  }

  nlohmann::json summary;
  summary["problem"] = config.problem;
  summary["solver"] = config.solver;
  summary["repetitions"] = config.repetitions;
  summary["eps"] = config.eps;
  nlohmann::json runs = nlohmann::json::array();
  bool solver_failed = false;

  try {
    for (int r = 0; r < config.repetitions; ++r) {
      SolverConfig cfg = config.config;
      cfg.seed = config.config.seed + static_cast<std::uint64_t>(r);
      const SolverTrace trace =
          config.solver == "napgmad" ? na_pg_mad(p, cfg) : pg_mad(p, cfg);
      if (trace.reason == StopReason::NonFinite) solver_failed = true;

      const std::string suffix =
          config.repetitions > 1 ? "_" + std::to_string(r + 1) : std::string();
      const fs::path dir(config.out_dir);
      write_trace_csv(trace.records, (dir / ("trace" + suffix + ".csv")).string());
      if (config.write_plot_data) {
        write_plot_column(trace.records, (dir / ("error" + suffix + ".dat")).string(),
                          &IterateRecord::error);
        write_plot_column(trace.records, (dir / ("lower_gap" + suffix + ".dat")).string(),
                          &IterateRecord::lower_gap);
      }

      const IterateRecord& last = trace.records.back();
      const double tau_eff =
          cfg.auto_tau ? cfg.tau_factor * lipschitz_constants(p, last.rho).L_P : cfg.params.tau;
      const SolverState& s = trace.final_state;
      const KktReport kkt =
          check_eps_kkt(p, last.rho, s.x, s.y, s.lambda, s.z, config.eps,
                        default_gap_scales(cfg.params.alpha_x, tau_eff));

      nlohmann::json run;
      run["seed"] = cfg.seed;
      run["stop_reason"] = reason_name(trace.reason);
      run["iterations"] = last.k;
      run["total_inner_steps"] = trace.total_inner_steps;
      run["wall_ms"] = trace.wall_ms;
      run["final"] = {{"rho", last.rho},
                      {"f", last.f_value},
                      {"error", last.error},
                      {"lower_gap", last.lower_gap}};
      run["kkt"] = nlohmann::json::parse(io::kkt_report_to_json_text(kkt));
      run["eps_kkt"] = kkt.verdict;
      runs.push_back(std::move(run));
    }
    summary["runs"] = std::move(runs);
    std::ofstream out(fs::path(config.out_dir) / "summary.json");
    if (!out) throw std::runtime_error("cannot open summary.json for writing");
    out << summary.dump(2) << "\n";
    if (!out) throw std::runtime_error("failed writing summary.json");
  } catch (const fs::filesystem_error& e) {
    log::error("run_experiment: I/O failure: ", e.what());
    return 2;
  } catch (const std::runtime_error& e) {
    log::error("run_experiment: ", e.what());
    const std::string what = e.what();
    if (what.find("writing") != std::string::npos || what.find("open") != std::string::npos)
      return 2;
    return 1;
  }
  return solver_failed ? 1 : 0;
}

}  // namespace mmbo
