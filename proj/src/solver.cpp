#include "mmbo/solver.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "mmbo/log.hpp"
#include "mmbo/rng.hpp"
#include "mmbo/stationarity.hpp"

namespace mmbo {

AugmentedPoint to_augmented(const SolverState& s) {
  return {s.x, s.z, s.u, s.v, s.y, s.lambda};
}

namespace {

struct InnerStepGrads {
  Vector y, lambda;
};

// Gradients of the surrogate's inner block at (y, lam) with the outer block
// taken from `state`.
InnerStepGrads inner_block_grads(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                                 const SolverState& state, const Vector& y, const Vector& lam) {
  const FGrads f = eval_f_grads(p, state.x, y, lam);
  const GGrads gy = eval_g_grads(p, y, lam);
  const GGrads gz = eval_g_grads(p, state.z, lam);
  InnerStepGrads out;
  out.y = f.y - params.rho * gy.z - params.tau * (y - state.u);
  out.lambda = f.lam - params.rho * (gy.lam - gz.lam) - params.tau * (lam - state.v);
  return out;
}

double momentum_theta(const PenaltyParams& params, std::optional<double> theta_override) {
  if (theta_override) return *theta_override;
  const double ka = params.kappa * params.alpha_y;
  if (ka >= 1.0) {
    log::debug("kappa*alpha_y = ", ka, " >= 1 invalidates the momentum formula; using theta=0");
    return 0.0;
  }
  const double root = std::sqrt(ka);
  return (1.0 - root) / (1.0 + root);
}

}  // namespace

InnerResult inner_ascent(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                         const SolverState& state, int T, bool accelerated,
                         std::optional<double> theta_override) {
  if (T < 1) return {state.y, state.lambda};
  Vector y = state.y, lam = state.lambda;
  if (!accelerated) {
    for (int t = 0; t < T; ++t) {
      const InnerStepGrads g = inner_block_grads(p, params, state, y, lam);
      y = project(p.setY, y + params.alpha_y * g.y);
      lam = project(p.setLambda, lam + params.alpha_y * g.lambda);
    }
    return {std::move(y), std::move(lam)};
  }
  const double theta = momentum_theta(params, theta_override);
  Vector ya = y, la = lam;  // momentum resets at every outer iteration
  for (int t = 0; t < T; ++t) {
    const InnerStepGrads g = inner_block_grads(p, params, state, ya, la);
    Vector y_next = project(p.setY, ya + params.alpha_y * g.y);
    Vector lam_next = project(p.setLambda, la + params.alpha_y * g.lambda);
    ya = y_next + theta * (y_next - y);
    la = lam_next + theta * (lam_next - lam);
    y = std::move(y_next);
    lam = std::move(lam_next);
  }
  return {std::move(y), std::move(lam)};
}

InnerTrace inner_ascent_traced(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                               const SolverState& state, int T, bool accelerated,
                               std::optional<double> theta_override) {
  InnerTrace trace;
  trace.y.push_back(state.y);
  trace.lambda.push_back(state.lambda);
  SolverState cur = state;
  for (int t = 0; t < T; ++t) {
    // One step at a time; accelerated mode needs its own running momentum.
    if (!accelerated) {
      const InnerResult r = inner_ascent(p, params, cur, 1, false);
      cur.y = r.y;
      cur.lambda = r.lambda;
    } else {
      break;
    }
    trace.y.push_back(cur.y);
    trace.lambda.push_back(cur.lambda);
  }
  if (!accelerated) return trace;

  const double theta = momentum_theta(params, theta_override);
  Vector y = state.y, lam = state.lambda, ya = y, la = lam;
  for (int t = 0; t < T; ++t) {
    const InnerStepGrads g = inner_block_grads(p, params, state, ya, la);
    Vector y_next = project(p.setY, ya + params.alpha_y * g.y);
    Vector lam_next = project(p.setLambda, la + params.alpha_y * g.lambda);
    ya = y_next + theta * (y_next - y);
    la = lam_next + theta * (lam_next - lam);
    y = std::move(y_next);
    lam = std::move(lam_next);
    trace.y.push_back(y);
    trace.lambda.push_back(lam);
  }
  return trace;
}

OuterResult outer_step(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                       const SolverState& state, const Vector& y_next,
                       const Vector& lambda_next) {
  OuterResult out;
  const Vector gx = eval_f_grads(p, state.x, y_next, lambda_next).x;
  const Vector gz = params.rho * eval_g_grads(p, state.z, lambda_next).z;
  out.x = project(p.setX, state.x - params.alpha_x * gx);
  out.z = project(p.setY, state.z - params.alpha_x * gz);
  const double blend = 1.0 + params.alpha_x * params.tau;
  out.u = blend * state.u - params.alpha_x * params.tau * y_next;
  out.v = blend * state.v - params.alpha_x * params.tau * lambda_next;
  return out;
}

namespace {

Vector uniform_in_box(Rng& rng, const Box& box) {
  Vector v(box.dim());
  for (int i = 0; i < box.dim(); ++i) {
    const double lo = std::isfinite(box.lb[i]) ? box.lb[i] : -1.0;
    const double hi = std::isfinite(box.ub[i]) ? box.ub[i] : 1.0;
    v[i] = rng.uniform(std::min(lo, hi), std::max(lo, hi));
  }
  return v;
}

SolverState initial_state(const MinimaxBilevelProblem& p, const SolverConfig& config) {
  if (config.start) {
    const AugmentedPoint& s = *config.start;
    SolverState st{s.x, s.y, s.lambda, s.z, s.u, s.v, 0};
    st.x = project(p.setX, st.x);
    st.y = project(p.setY, st.y);
    st.lambda = project(p.setLambda, st.lambda);
    st.z = project(p.setY, st.z);
    return st;
  }
  Rng rng(config.seed);
  SolverState st;
  if (config.init == InitScheme::AllNormal) {
    st.x = project(p.setX, rng.normal_vector(p.dims.dx));
    st.y = project(p.setY, rng.normal_vector(p.dims.dy));
    st.lambda = project(p.setLambda, rng.normal_vector(p.dims.dl));
    st.u = rng.normal_vector(p.dims.dy);
    st.v = rng.normal_vector(p.dims.dl);
    st.z = project(p.setY, rng.normal_vector(p.dims.dy));
  } else {
    st.x = project(p.setX, uniform_in_box(rng, bounding_box(p.setX)));
    st.y = project(p.setY, uniform_in_box(rng, bounding_box(p.setY)));
    st.lambda = project(p.setLambda, uniform_in_box(rng, bounding_box(p.setLambda)));
    st.u = rng.normal_vector(p.dims.dy);
    st.v = rng.normal_vector(p.dims.dl);
    st.z = lower_level_solve(p, st.lambda, config.lower_level_tol).z;
  }
  st.k = 0;
  return st;
}

bool state_finite(const SolverState& s) {
  return s.x.allFinite() && s.y.allFinite() && s.lambda.allFinite() && s.z.allFinite() &&
         s.u.allFinite() && s.v.allFinite();
}

struct RhoSchedule {
  double rho0;
  double growth;
  double cap;
  double at(int k) const {
    double rho = rho0;
    for (int i = 0; i < k; ++i) {
      rho *= growth;
      if (rho >= cap) return cap;
    }
    return std::min(rho, cap);
  }
};

IterateRecord make_record(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                          const SolverState& st, int k, double lower_level_tol,
                          double elapsed_ms) {
  IterateRecord rec;
  rec.k = k;
  rec.rho = params.rho;
  rec.f_value = eval_f(p, st.x, st.y, st.lambda);
  rec.p_rho_value = p_rho_value(p, params.rho, st.x, st.y, st.lambda, st.z);
  const GapScales scales = default_gap_scales(params.alpha_x, params.tau);
  const GapReport gaps = gap_measures(p, params.rho, st.x, st.y, st.lambda, st.z, scales);
  rec.gap_x = gaps.norm_x;
  rec.gap_y = gaps.norm_y;
  rec.gap_lambda = gaps.norm_lambda;
  rec.gap_z = gaps.norm_z;
  rec.error = composite_error(gaps);
  rec.lower_gap =
      eval_g(p, st.y, st.lambda) - lower_level_solve(p, st.lambda, lower_level_tol).value;
  rec.elapsed_ms = elapsed_ms;
  return rec;
}

SolverTrace run_mad(const MinimaxBilevelProblem& p, const SolverConfig& config,
                    bool accelerated) {
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed_ms = [&t0] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  const LipschitzConstants base = lipschitz_constants(p, 1.0);
  const RhoSchedule schedule{config.params.rho, config.rho_growth, config.stopping.rho_cap};
  auto params_at = [&](int k) {
    PenaltyParams params = config.params;
    params.rho = schedule.at(k);
    if (config.auto_tau) {
      const double L_P = base.L_f + 2.0 * params.rho * base.L_g;
      params.tau = config.tau_factor * L_P;
      params.kappa = params.tau - L_P;
    }
    return params;
  };

  SolverTrace trace;
  SolverState state = initial_state(p, config);
  if (!state_finite(state)) throw std::runtime_error("initial state is not finite");

  PenaltyParams params = params_at(0);
  trace.records.push_back(
      make_record(p, params, state, 0, config.lower_level_tol, elapsed_ms()));
  trace.states.push_back(state);

  const int budget = std::min(config.K, config.stopping.max_outer);
  Vector x_prev = state.x;
  trace.reason = StopReason::MaxOuter;
  for (int k = 0; k < budget; ++k) {
    params = params_at(k);
    const InnerResult inner =
        inner_ascent(p, params, state, config.T, accelerated, config.theta_override);
    trace.total_inner_steps += config.T;
    const OuterResult outer = outer_step(p, params, state, inner.y, inner.lambda);

    SolverState next;
    next.x = outer.x;
    next.z = outer.z;
    next.u = outer.u;
    next.v = outer.v;
    next.y = inner.y;
    next.lambda = inner.lambda;
    next.k = k + 1;
    if (!state_finite(next)) {
      log::error("non-finite iterate at outer step ", k + 1, "; aborting with last finite state");
      trace.reason = StopReason::NonFinite;
      break;
    }
    x_prev = state.x;
    state = std::move(next);

    IterateRecord rec =
        make_record(p, params, state, k + 1, config.lower_level_tol, elapsed_ms());
    if (!std::isfinite(rec.error) || !std::isfinite(rec.p_rho_value)) {
      log::error("non-finite diagnostics at outer step ", k + 1, "; aborting");
      trace.reason = StopReason::NonFinite;
      break;
    }
    trace.records.push_back(rec);
    trace.states.push_back(state);

    bool stop = params.rho >= config.stopping.rho_cap && rec.error <= config.stopping.error_tol &&
                std::abs(rec.lower_gap) <= config.stopping.lower_gap_tol;
    if (stop && config.stopping.rel_x_tol) {
      const double rel = (state.x - x_prev).norm() / std::max(1.0, state.x.norm());
      stop = rel <= *config.stopping.rel_x_tol;
    }
    if (stop) {
      trace.reason = StopReason::Converged;
      break;
    }
  }
  trace.final_state = trace.states.back();
  trace.wall_ms = elapsed_ms();
  return trace;
}

}  // namespace

SolverTrace pg_mad(const MinimaxBilevelProblem& p, const SolverConfig& config) {
  return run_mad(p, config, false);
}

SolverTrace na_pg_mad(const MinimaxBilevelProblem& p, const SolverConfig& config) {
  return run_mad(p, config, true);
}

SolverTrace penalty_continuation(const MinimaxBilevelProblem& p,
                                 const std::vector<ContinuationStage>& schedule,
                                 const SolverConfig& config) {
  if (schedule.empty()) throw std::invalid_argument("continuation schedule is empty");
  SolverTrace combined;
  SolverConfig stage_config = config;
  stage_config.rho_growth = 1.0;
  int offset = 0;
  for (size_t s = 0; s < schedule.size(); ++s) {
    stage_config.params.rho = schedule[s].rho;
    stage_config.stopping.rho_cap = schedule[s].rho;
    stage_config.stopping.error_tol = schedule[s].eps;
    // Within a stage the lower gap is limited by rho, not by the solver;
    // only the final stage enforces it.
    stage_config.stopping.lower_gap_tol =
        s + 1 == schedule.size() ? config.stopping.lower_gap_tol
                                 : std::numeric_limits<double>::infinity();
    const SolverTrace stage = run_mad(p, stage_config, config.accelerated);
    const size_t skip = s == 0 ? 0 : 1;  // drop the duplicated warm-start record
    for (size_t i = skip; i < stage.records.size(); ++i) {
      IterateRecord rec = stage.records[i];
      rec.k += offset;
      combined.records.push_back(rec);
      combined.states.push_back(stage.states[i]);
    }
    offset = combined.records.empty() ? 0 : combined.records.back().k;
    combined.total_inner_steps += stage.total_inner_steps;
    combined.wall_ms += stage.wall_ms;
    combined.reason = stage.reason;
    combined.final_state = stage.final_state;

    AugmentedPoint warm = to_augmented(stage.final_state);
    warm.u = warm.y;  // re-anchor the smoothing to the current inner block
    warm.v = warm.lambda;
    stage_config.start = warm;
  }
  return combined;
}

void write_trace_csv(const std::vector<IterateRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open trace file " + path);
  out << "iter,rho,f,P_rho,gap_x,gap_y,gap_lambda,gap_z,error,lower_gap,time_ms\n";
  char line[512];
  for (const IterateRecord& r : records) {
    std::snprintf(line, sizeof(line),
                  "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.k, r.rho,
                  r.f_value, r.p_rho_value, r.gap_x, r.gap_y, r.gap_lambda, r.gap_z, r.error,
                  r.lower_gap, r.elapsed_ms);
    out << line;
  }
  if (!out) throw std::runtime_error("failed writing trace file " + path);
}

BudgetResult theory_budget(const BudgetInputs& in, bool accelerated) {
  if (!(in.eps > 0.0) || !(in.kappa > 0.0) || !(in.alpha_x > 0.0) || !(in.alpha_y > 0.0))
    throw std::invalid_argument("budget inputs must be positive");
  if (!(in.alpha_x * in.L_theta < 1.0))
    throw std::invalid_argument("alpha_x must be below 1/L_theta");
  const double ka = in.kappa * in.alpha_y;
  if (!(ka < 1.0)) throw std::invalid_argument("kappa * alpha_y must be below 1");

  BudgetResult out;
  out.nu = std::max(1.0 + in.alpha_x * in.L_P, accelerated ? std::sqrt(5.0) : std::sqrt(3.0));
  const double contraction = accelerated ? 1.0 - std::sqrt(ka) : 1.0 - ka;
  const double lead = accelerated ? 64.0 : 32.0;
  const double one_minus = 1.0 - in.alpha_x * in.L_theta;
  const double log_arg = lead * out.nu * out.nu * in.omega1 *
                         (in.L_P * in.L_P + in.tau * in.tau) /
                         (in.kappa * one_minus * one_minus);
  out.T_bound =
      (std::log(log_arg) + 2.0 * std::log(1.0 / in.eps)) / (-std::log(contraction));
  out.K_bound = 16.0 * out.nu * out.nu * in.delta_theta / (in.alpha_x * one_minus) /
                (in.eps * in.eps);
  out.T = static_cast<long>(std::ceil(out.T_bound));
  out.K = static_cast<long>(std::ceil(out.K_bound));
  return out;
}

double estimate_omega1(const MinimaxBilevelProblem& p, const PenaltyParams& params,
                       const std::vector<SolverState>& states, double inner_tol) {
  double worst = 0.0;
  for (const SolverState& st : states) {
    const VarthetaResult th = vartheta(p, params, st.x, st.z, st.u, st.v, inner_tol);
    const double q = q_value(p, params, to_augmented(st));
    worst = std::max(worst, th.value - q);
  }
  return worst;
}

}  // namespace mmbo
