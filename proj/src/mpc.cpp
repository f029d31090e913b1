#include "cpmpc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace cpmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Nonempty boxes of all future constraint sets in one flat array, grouped
/// by tau, so the penalty evaluation never touches empty boxes.
struct FlatSets {
  std::vector<UnsafeBox> boxes;
  std::vector<int> agents;    // source agent of each box
  std::vector<int> offsets;   // group i (tau = t+1+i) spans [offsets[i], offsets[i+1])
};

FlatSets flatten(const std::vector<ConstraintSet>& sets) {
  FlatSets flat;
  flat.offsets.reserve(sets.size() + 1);
  flat.offsets.push_back(0);
  for (const ConstraintSet& set : sets) {
    for (std::size_t j = 0; j < set.boxes.size(); ++j) {
      if (set.boxes[j].empty()) continue;
      flat.boxes.push_back(set.boxes[j]);
      flat.agents.push_back(static_cast<int>(j));
    }
    flat.offsets.push_back(static_cast<int>(flat.boxes.size()));
  }
  return flat;
}

double squared_distance(const BicycleState& x, const Point2& target) {
  const double dx = x.px - target.x();
  const double dy = x.py - target.y();
  return dx * dx + dy * dy;
}

/// Cost plus mu times the total constraint violation of the input vector z
/// (clamped into the input box, so out-of-box probes see a flat extension).
double penalty_value(const MpcProblem& prob, const FlatSets& flat, const double* z, double mu) {
  const int H = prob.remaining();
  const MissionSpec& m = prob.mission;
  const InputBounds& ub = prob.input_bounds;
  const bool bounded = !m.state_bounds.empty();

  BicycleState x = prob.current;
  double cost = m.position_weight * squared_distance(x, m.target);
  double pen = 0.0;
  for (int i = 0; i < H; ++i) {
    const BicycleInput u{std::clamp(z[2 * i], ub.phi_lo, ub.phi_hi),
                         std::clamp(z[2 * i + 1], ub.a_lo, ub.a_hi)};
    x = bicycle_step(x, u, prob.params);
    cost += m.position_weight * squared_distance(x, m.target);

    double clearance = kInf;
    for (int k = flat.offsets[i]; k < flat.offsets[i + 1]; ++k) {
      const UnsafeBox& b = flat.boxes[k];
      const double sd = std::max(std::max(b.xlo - x.px, x.px - b.xhi),
                                 std::max(b.ylo - x.py, x.py - b.yhi));
      clearance = std::min(clearance, sd);
    }
    if (clearance < 0.0) pen -= clearance;
    if (bounded) pen += std::max(0.0, m.state_bounds[prob.t + 1 + i].violation(x));
  }
  const double terminal = std::max(std::abs(x.px - m.target.x()), std::abs(x.py - m.target.y())) -
                          m.terminal_tolerance;
  if (terminal > 0.0) pen += terminal;
  // mu = +infinity selects the feasibility-restoration objective: violation
  // alone, without the cost term that an infinite multiplier would drown out.
  return std::isinf(mu) ? pen : cost + mu * pen;
}

/// A candidate plan together with its exact certificate.
struct Certified {
  std::vector<BicycleState> states;
  std::vector<BicycleInput> inputs;
  double cost = 0.0;
  FeasibilityCertificate cert;
};

/// Exact re-evaluation: roll the raw (unclamped) inputs through the
/// dynamics and measure every constraint. No penalty terms, no smoothing.
Certified certify(const MpcProblem& prob, const FlatSets& flat,
                  std::vector<BicycleInput> inputs) {
  Certified out;
  out.inputs = std::move(inputs);
  out.states = rollout(prob.current, out.inputs, prob.params);
  out.cost = evaluate_cost(out.states, out.inputs, prob.mission);

  auto consider = [&](double violation, ConstraintRef::Kind kind, int tau, int agent) {
    if (violation > out.cert.worst_violation) {
      out.cert.worst_violation = violation;
      out.cert.worst = ConstraintRef{kind, tau, agent};
    }
  };

  const MissionSpec& m = prob.mission;
  const int H = prob.remaining();
  for (int i = 0; i < H; ++i)
    consider(prob.input_bounds.violation(out.inputs[i]), ConstraintRef::Kind::input, prob.t + i,
             -1);
  for (int i = 0; i < H; ++i) {
    const BicycleState& x = out.states[i + 1];
    double clearance = kInf;
    int closest_agent = -1;
    for (int k = flat.offsets[i]; k < flat.offsets[i + 1]; ++k) {
      const UnsafeBox& b = flat.boxes[k];
      const double sd = std::max(std::max(b.xlo - x.px, x.px - b.xhi),
                                 std::max(b.ylo - x.py, x.py - b.yhi));
      if (sd < clearance) {
        clearance = sd;
        closest_agent = flat.agents[k];
      }
    }
    if (closest_agent >= 0)
      consider(-clearance, ConstraintRef::Kind::clearance, prob.t + 1 + i, closest_agent);
    if (!m.state_bounds.empty())
      consider(m.state_bounds[prob.t + 1 + i].violation(x), ConstraintRef::Kind::state,
               prob.t + 1 + i, -1);
  }
  const BicycleState& xT = out.states.back();
  consider(std::max(std::abs(xT.px - m.target.x()), std::abs(xT.py - m.target.y())) -
               m.terminal_tolerance,
           ConstraintRef::Kind::terminal, m.horizon, -1);
  return out;
}

double coord_lo(const InputBounds& ub, int d) { return d % 2 == 0 ? ub.phi_lo : ub.a_lo; }
double coord_hi(const InputBounds& ub, int d) { return d % 2 == 0 ? ub.phi_hi : ub.a_hi; }

void project(const InputBounds& ub, std::vector<double>& z) {
  for (std::size_t d = 0; d < z.size(); ++d)
    z[d] = std::clamp(z[d], coord_lo(ub, static_cast<int>(d)), coord_hi(ub, static_cast<int>(d)));
}

std::vector<double> pack(const std::vector<BicycleInput>& inputs) {
  std::vector<double> z(2 * inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    z[2 * i] = inputs[i].phi;
    z[2 * i + 1] = inputs[i].a;
  }
  return z;
}

std::vector<BicycleInput> unpack(const std::vector<double>& z) {
  std::vector<BicycleInput> inputs(z.size() / 2);
  for (std::size_t i = 0; i < inputs.size(); ++i) inputs[i] = BicycleInput{z[2 * i], z[2 * i + 1]};
  return inputs;
}

/// Projected gradient descent with Armijo backtracking on the penalty
/// objective at a fixed mu. Returns the iteration count; z is updated in
/// place and stays inside the input box.
long descend(const MpcProblem& prob, const FlatSets& flat, double mu, const SolverConfig& cfg,
             std::vector<double>& z) {
  const int n = static_cast<int>(z.size());
  std::vector<double> grad(n), probe(z), trial(n);
  double f = penalty_value(prob, flat, z.data(), mu);
  double alpha = 1.0;
  long iters = 0;
  int stalled = 0;

  for (int it = 0; it < cfg.max_inner_iterations; ++it) {
    ++iters;
    double gnorm2 = 0.0;
    for (int d = 0; d < n; ++d) {
      const double saved = probe[d];
      probe[d] = saved + cfg.fd_step;
      const double fp = penalty_value(prob, flat, probe.data(), mu);
      probe[d] = saved - cfg.fd_step;
      const double fm = penalty_value(prob, flat, probe.data(), mu);
      probe[d] = saved;
      grad[d] = (fp - fm) / (2.0 * cfg.fd_step);
      gnorm2 += grad[d] * grad[d];
    }
    if (gnorm2 < 1e-20) break;

    alpha = std::min(alpha * 2.0, 64.0);
    bool accepted = false;
    double ft = f;
    for (int bt = 0; bt < 48; ++bt) {
      double step2 = 0.0;
      for (int d = 0; d < n; ++d) {
        trial[d] = std::clamp(z[d] - alpha * grad[d], coord_lo(prob.input_bounds, d),
                              coord_hi(prob.input_bounds, d));
        const double dd = z[d] - trial[d];
        step2 += dd * dd;
      }
      if (step2 < 1e-24) break;  // projection absorbed the whole step
      ft = penalty_value(prob, flat, trial.data(), mu);
      if (ft <= f - (cfg.armijo_c / alpha) * step2) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    const double improvement = f - ft;
    z.swap(trial);
    probe = z;
    f = ft;
    // Penalty kinks allow long runs of vanishing progress; stop once gains
    // stall. The violation-only objective shrinks toward zero, so its stall
    // test must be relative to |f| alone (an absolute floor would abort the
    // final approach) and gets extra patience near max-norm kinks.
    const bool stalling = std::isinf(mu) ? improvement <= 1e-7 * std::abs(f)
                                         : improvement <= 1e-7 * (1.0 + std::abs(f));
    if (stalling) {
      if (++stalled >= (std::isinf(mu) ? 6 : 2)) break;
    } else {
      stalled = 0;
    }
  }
  return iters;
}

/// Full penalty loop from one starting point: minimize at increasing mu
/// until the exact certificate clears feas_tol or the penalty tops out.
Certified polish(const MpcProblem& prob, const FlatSets& flat, const SolverConfig& cfg,
                 std::vector<double> z, long& iterations) {
  project(prob.input_bounds, z);
  Certified best = certify(prob, flat, unpack(z));
  // Restoration first: from an infeasible start, descend on violation alone.
  // The escalating ladder below then mostly rebalances cost from a point
  // already at (or near) the feasible set, instead of dragging the iterate
  // through the cost-optimal infeasible basin at small mu.
  if (!best.cert.feasible(cfg.feas_tol)) {
    iterations += descend(prob, flat, kInf, cfg, z);
    Certified restored = certify(prob, flat, unpack(z));
    if (restored.cert.worst_violation < best.cert.worst_violation) best = std::move(restored);
  }
  // A start that is already feasible only needs cost polishing under a stiff
  // penalty; the escalation ladder is for digging out of infeasibility.
  const double mu0 = best.cert.feasible(cfg.feas_tol)
                         ? std::min(std::max(cfg.penalty_initial, 1e4), cfg.penalty_max)
                         : cfg.penalty_initial;
  for (double mu = mu0; mu <= cfg.penalty_max; mu *= cfg.penalty_growth) {
    iterations += descend(prob, flat, mu, cfg, z);
    Certified cur = certify(prob, flat, unpack(z));
    const bool better = cur.cert.worst_violation <= cfg.feas_tol
                            ? (best.cert.worst_violation > cfg.feas_tol || cur.cost < best.cost)
                            : (best.cert.worst_violation > cfg.feas_tol &&
                               cur.cert.worst_violation < best.cert.worst_violation);
    if (better) best = std::move(cur);
    if (best.cert.worst_violation <= cfg.feas_tol) break;
  }
  return best;
}

double wrap_angle(double a) { return std::atan2(std::sin(a), std::cos(a)); }

/// Greedy steer-toward-target initializer: aim the heading at the target and
/// track the speed that covers the remaining distance in the remaining time.
/// `wait` holds the vehicle braked for the first steps and `arrive` is the
/// step (counted within this plan) by which the distance should be closed;
/// varying them shifts the phase at which the plan crosses the scene, which
/// gives the multi-start seeds qualitatively different routes around moving
/// constraint regions.
std::vector<BicycleInput> steer_heuristic(const MpcProblem& prob, int wait, int arrive) {
  const MissionSpec& m = prob.mission;
  const InputBounds& ub = prob.input_bounds;
  const int H = prob.remaining();
  BicycleState x = prob.current;
  std::vector<BicycleInput> inputs;
  inputs.reserve(H);
  for (int i = 0; i < H; ++i) {
    const double dx = m.target.x() - x.px;
    const double dy = m.target.y() - x.py;
    const double dist = std::hypot(dx, dy);
    const double heading_err = dist > 1e-9 ? wrap_angle(std::atan2(dy, dx) - x.theta) : 0.0;
    double phi = 0.0;
    if (std::abs(x.v) > 1e-6)
      phi = std::atan(heading_err * prob.params.length / (prob.params.delta * x.v));
    double v_des = 0.0;
    if (i >= wait) {
      const int steps_left = std::max(1, std::min(arrive, H) - i);
      v_des = dist / (steps_left * prob.params.delta);
    }
    const double a = (v_des - x.v) / prob.params.delta;
    const BicycleInput u = ub.clamp(i < wait ? BicycleInput{0.0, a} : BicycleInput{phi, a});
    x = bicycle_step(x, u, prob.params);
    inputs.push_back(u);
  }
  return inputs;
}

}  // namespace

void SolverConfig::validate() const {
  if (!(feas_tol > 0.0)) throw ConfigError("feas_tol must be positive");
  if (!(penalty_initial > 0.0) || !(penalty_growth > 1.0) || !(penalty_max >= penalty_initial))
    throw ConfigError("invalid penalty schedule");
  if (max_inner_iterations < 1) throw ConfigError("max_inner_iterations must be >= 1");
  if (random_restarts < 0) throw ConfigError("random_restarts must be >= 0");
  if (!(restart_scale >= 0.0)) throw ConfigError("restart_scale must be >= 0");
  if (!(fd_step > 0.0)) throw ConfigError("fd_step must be positive");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw ConfigError("armijo_c must be in (0, 1)");
}

std::string ConstraintRef::describe() const {
  switch (kind) {
    case Kind::clearance:
      return "clearance(tau=" + std::to_string(tau) + ", agent=" + std::to_string(agent) + ")";
    case Kind::terminal:
      return "terminal(tau=" + std::to_string(tau) + ")";
    case Kind::input:
      return "input(t=" + std::to_string(tau) + ")";
    case Kind::state:
      return "state(tau=" + std::to_string(tau) + ")";
    case Kind::none:
      break;
  }
  return "none";
}

void MpcProblem::validate() const {
  mission.validate();
  params.validate();
  input_bounds.validate();
  if (t < 0 || t >= mission.horizon) throw ConfigError("MPC time t outside 0..T-1");
  if (!current.all_finite()) throw ConfigError("current state not finite");
  if (static_cast<int>(sets.size()) != remaining())
    throw ConfigError("need one constraint set per future step");
  for (int i = 0; i < remaining(); ++i)
    if (sets[i].tau != t + 1 + i) throw ConfigError("constraint sets out of order");
  if (warm_start) {
    if (static_cast<int>(warm_start->inputs.size()) != remaining() ||
        warm_start->states.size() != warm_start->inputs.size() + 1)
      throw ConfigError("warm start does not cover t..T");
  }
}

MpcResult solve_step(const MpcProblem& problem, const SolverConfig& cfg) {
  problem.validate();
  cfg.validate();
  const FlatSets flat = flatten(problem.sets);

  std::vector<Certified> candidates;
  SolverDiagnostics diag;
  auto add = [&](Certified c) {
    candidates.push_back(std::move(c));
    ++diag.starts;
  };

  // Candidate 0: the raw warm start, certified as-is. Keeping it unpolished
  // guarantees the previous solution's tail is never lost to solver failure.
  std::optional<std::vector<double>> warm_z;
  if (problem.warm_start) {
    add(certify(problem, flat, problem.warm_start->inputs));
    warm_z = pack(problem.warm_start->inputs);
  }
  if (warm_z) add(polish(problem, flat, cfg, *warm_z, diag.iterations));

  // Steer-heuristic seeds with three crossing phases: paced to the horizon,
  // sprint-early, and hold-then-go. A warm-started solve already carries a
  // feasible continuation, so the heuristics only run on cold starts.
  const int H = problem.remaining();
  const std::vector<double> heuristic_z = pack(steer_heuristic(problem, 0, H));
  if (!warm_z) {
    add(polish(problem, flat, cfg, heuristic_z, diag.iterations));
    if (H >= 4) {
      add(polish(problem, flat, cfg, pack(steer_heuristic(problem, 0, (3 * H) / 5)),
                 diag.iterations));
      add(polish(problem, flat, cfg, pack(steer_heuristic(problem, H / 4, H)), diag.iterations));
    }
  }

  Rng rng(cfg.seed);
  const std::vector<double>& base = warm_z ? *warm_z : heuristic_z;
  for (int r = 0; r < cfg.random_restarts; ++r) {
    std::vector<double> z = base;
    for (std::size_t d = 0; d < z.size(); ++d) {
      const int di = static_cast<int>(d);
      const double half =
          0.5 * (coord_hi(problem.input_bounds, di) - coord_lo(problem.input_bounds, di));
      z[d] += cfg.restart_scale * half * rng.normal();
    }
    add(polish(problem, flat, cfg, std::move(z), diag.iterations));
  }

  const auto pick_best = [&]() {
    int best = -1;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (!candidates[i].cert.feasible(cfg.feas_tol)) continue;
      if (best < 0 || candidates[i].cost < candidates[best].cost) best = static_cast<int>(i);
    }
    return best;
  };
  const auto pick_least = [&]() {
    int least = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i)
      if (candidates[i].cert.worst_violation < candidates[least].cert.worst_violation)
        least = static_cast<int>(i);
    return least;
  };

  int best = pick_best();
  if (best < 0) {
    // Rescue pass: every start ended infeasible, typically stalled a hair
    // short of a constraint kink. Give the closest candidate one extended
    // violation-only descent before declaring the step infeasible.
    SolverConfig rescue = cfg;
    rescue.max_inner_iterations = 4 * cfg.max_inner_iterations;
    std::vector<double> z = pack(candidates[pick_least()].inputs);
    project(problem.input_bounds, z);
    diag.iterations += descend(problem, flat, kInf, rescue, z);
    add(certify(problem, flat, unpack(z)));
    best = pick_best();
  }
  if (best >= 0) {
    Certified& c = candidates[best];
    return MpcSolution{problem.t, std::move(c.states), std::move(c.inputs), c.cost, c.cert, diag};
  }
  const int least = pick_least();
  return InfeasibleReport{candidates[least].cert, candidates[least].cost, diag};
}

WarmStart shift_warm_start(const MpcSolution& prev) {
  if (prev.inputs.empty()) throw ConfigError("cannot shift an empty solution");
  WarmStart shifted;
  shifted.states.assign(prev.states.begin() + 1, prev.states.end());
  shifted.inputs.assign(prev.inputs.begin() + 1, prev.inputs.end());
  return shifted;
}

ControllerKind controller_from_string(const std::string& s) {
  if (s == "proposed") return ControllerKind::proposed;
  if (s == "benchmark") return ControllerKind::benchmark;
  throw ConfigError("unknown controller '" + s + "' (expected 'proposed' or 'benchmark')");
}

std::string to_string(ControllerKind kind) {
  return kind == ControllerKind::proposed ? "proposed" : "benchmark";
}

void ClosedLoopSetup::validate() const {
  mission.validate();
  params.validate();
  input_bounds.validate();
  constraint.validate();
  predictor.validate();
  solver.validate();
  if (regions.horizon() != mission.horizon)
    throw ConfigError("region table horizon does not match the mission");
  if (!regions.all_finite()) {
    const double per_step = regions.method == RegionMethod::benchmark
                                ? regions.delta / mission.horizon
                                : regions.delta;
    throw CalibrationInfeasibleError(
        "region table contains infinite radii; recalibrate with at least " +
            std::to_string(min_calibration_size(per_step)) + " trajectories",
        min_calibration_size(per_step));
  }
  for (const auto& [t, tau] : capture_pairs)
    if (t < 0 || tau <= t || tau > mission.horizon)
      throw ConfigError("capture pair outside 0 <= t < tau <= T");
}

long min_calibration_size(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  for (long n = 1; n < 100000000L; ++n)
    if (quantile_index(n, delta).finite) return n;
  throw ConfigError("delta too small for a practical calibration size");
}

EpisodeLog run_closed_loop(const ClosedLoopSetup& setup, const Trajectory& agents, RngSeed seed) {
  setup.validate();
  const AgentLayout layout = agents.layout();
  if (layout.agent_dim != 2) throw ConfigError("closed loop needs planar agents");
  if (agents.horizon() != setup.mission.horizon)
    throw ConfigError("agent trajectory horizon does not match the mission");
  if (setup.predictor.joint_dim() != layout.joint_dim())
    throw ConfigError("predictor dimension does not match the agents");

  const int T = setup.mission.horizon;
  const double margin = setup.constraint.safety_margin;
  const double L = setup.constraint.lipschitz_L;

  EpisodeLog log;
  log.controller = setup.controller;
  log.seed = seed.value;

  // Running per-tau intersections (proposed controller). Index tau - 1.
  std::vector<ConstraintSet> running(T);
  for (int tau = 1; tau <= T; ++tau) {
    running[tau - 1].tau = tau;
    running[tau - 1].boxes.assign(layout.num_agents, UnsafeBox{-kInf, kInf, -kInf, kInf});
  }

  std::optional<MpcSolution> previous;
  BicycleState x = setup.mission.initial;
  JointState y_prev;

  for (int t = 0; t < T; ++t) {
    const JointState y_now = agents.state(t);

    StepRecord record;
    record.t = t;
    record.x = x;
    record.realized_c = evaluate_c(setup.constraint, x.position(), y_now, layout);
    record.min_clearance = record.realized_c + margin;
    log.realized_cost += setup.mission.position_weight * squared_distance(x, setup.mission.target);

    const std::vector<JointState> estimates =
        predict_from(setup.predictor, y_now, t > 0 ? &y_prev : nullptr, t, T);

    // Fold (proposed) or rebuild (benchmark) the constraint geometry.
    std::vector<ConstraintSet> sets;
    sets.reserve(T - t);
    for (int tau = t + 1; tau <= T; ++tau) {
      const double radius = setup.regions.radii.at(t, tau);
      const double half = margin + L * radius;
      if (setup.controller == ControllerKind::proposed) {
        ConstraintSet& run = running[tau - 1];
        for (int j = 0; j < layout.num_agents; ++j) {
          const Point2 center = agent_block(estimates[tau - t - 1], layout, j);
          const UnsafeBox folded = run.boxes[j].intersect(UnsafeBox::square(center, half));
          if (!folded.subset_of(run.boxes[j])) ++log.monotonicity_violations;
          run.boxes[j] = folded;
        }
        run.t = t;
        run.provenance.push_back(t);
        sets.push_back(run);
      } else {
        ConstraintSet fresh;
        fresh.t = t;
        fresh.tau = tau;
        fresh.provenance.push_back(t);
        for (int j = 0; j < layout.num_agents; ++j) {
          const Point2 center = agent_block(estimates[tau - t - 1], layout, j);
          fresh.boxes.push_back(UnsafeBox::square(center, half));
        }
        sets.push_back(std::move(fresh));
      }
    }
    for (const auto& [ct, ctau] : setup.capture_pairs)
      if (ct == t) log.captured_sets.push_back(sets[ctau - t - 1]);

    MpcProblem problem;
    problem.t = t;
    problem.current = x;
    problem.mission = setup.mission;
    problem.params = setup.params;
    problem.input_bounds = setup.input_bounds;
    problem.sets = std::move(sets);
    if (previous) problem.warm_start = shift_warm_start(*previous);

    // Theorem-level bookkeeping: the shifted tail of a feasible previous
    // solution must itself pass the exact certificate against the new sets.
    if (problem.warm_start && setup.controller == ControllerKind::proposed) {
      const FlatSets flat = flatten(problem.sets);
      const Certified shifted = certify(problem, flat, problem.warm_start->inputs);
      if (!shifted.cert.feasible(setup.solver.feas_tol)) ++log.warm_start_failures;
    }

    SolverConfig cfg = setup.solver;
    cfg.seed = RngSeed{derive_seed(seed.value, static_cast<std::uint64_t>(t))};
    if (!problem.warm_start) {
      // Cold starts (the first step, or recovery after an infeasible step)
      // face the full nonconvex landscape without a known-feasible seed, so
      // they get a larger search budget than the cheap warm-started steps.
      cfg.max_inner_iterations *= 2;
      cfg.random_restarts *= 3;
    }
    MpcResult result = solve_step(problem, cfg);
    if (t == 0 && std::holds_alternative<InfeasibleReport>(result)) {
      // A failure at the opening step forfeits the episode, so it alone gets
      // one expensive retry before the verdict stands — unless the terminal
      // ball is already swallowed by an unsafe box, which no budget can fix.
      const UnsafeBox ball =
          UnsafeBox::square(setup.mission.target, setup.mission.terminal_tolerance);
      bool hopeless = false;
      for (const UnsafeBox& box : problem.sets.back().boxes)
        hopeless = hopeless || ball.subset_of(box);
      if (!hopeless) {
        SolverConfig big = cfg;
        big.max_inner_iterations = 6 * setup.solver.max_inner_iterations;
        big.random_restarts = 8 * setup.solver.random_restarts;
        MpcResult retry = solve_step(problem, big);
        if (std::holds_alternative<MpcSolution>(retry)) result = std::move(retry);
      }
    }

    if (auto* solution = std::get_if<MpcSolution>(&result)) {
      record.feasible = true;
      record.cost = solution->cost;
      record.u = solution->inputs.front();
      record.solver = solution->diagnostics;
      x = solution->states[1];
      previous = std::move(*solution);
    } else {
      const auto& report = std::get<InfeasibleReport>(result);
      record.feasible = false;
      record.u = BicycleInput{0.0, 0.0};
      record.solver = report.diagnostics;
      if (!log.ever_infeasible) log.first_infeasible_step = t;
      log.ever_infeasible = true;
      x = bicycle_step(x, record.u, setup.params);
      previous.reset();
    }
    log.steps.push_back(std::move(record));
    y_prev = y_now;
  }

  const JointState y_final = agents.state(T);
  log.terminal_realized_c = evaluate_c(setup.constraint, x.position(), y_final, layout);
  log.terminal_error = (x.position() - setup.mission.target).lpNorm<Eigen::Infinity>();
  log.realized_cost += setup.mission.position_weight * squared_distance(x, setup.mission.target);

  log.safe = log.terminal_realized_c >= 0.0;
  for (std::size_t t = 1; t < log.steps.size(); ++t)
    if (log.steps[t].realized_c < 0.0) log.safe = false;
  return log;
}

nlohmann::json step_record_to_json(const StepRecord& record) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  nlohmann::json j;
  j["t"] = record.t;
  j["feasible"] = record.feasible;
  j["cost"] = num(record.cost);
  j["u"] = {num(record.u.phi), num(record.u.a)};
  j["x"] = {num(record.x.px), num(record.x.py), num(record.x.theta), num(record.x.v)};
  j["min_clearance"] = num(record.min_clearance);
  j["realized_c"] = num(record.realized_c);
  j["solver"] = {{"starts", record.solver.starts}, {"iterations", record.solver.iterations}};
  return j;
}

}  // namespace cpmpc
