#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cpmpc/conformal.hpp"
#include "cpmpc/constraints.hpp"
#include "cpmpc/dynamics.hpp"
#include "cpmpc/predictor.hpp"
#include "cpmpc/rng.hpp"

namespace cpmpc {

/// Penalty / multi-start solver knobs. The defaults are the shipped
/// configuration; experiment configs may dial restarts down for speed.
struct SolverConfig {
  double feas_tol = 1e-6;
  double penalty_initial = 10.0;
  double penalty_growth = 10.0;
  double penalty_max = 1e8;
  int max_inner_iterations = 200;  // descent iterations per penalty stage
  int random_restarts = 8;         // R
  double restart_scale = 0.35;     // restart noise std, fraction of input half-range
  double fd_step = 1e-6;           // central-difference probe
  double armijo_c = 1e-4;
  RngSeed seed;                    // drives the random restarts

  void validate() const;
};

/// Which exact constraint a violation refers to.
struct ConstraintRef {
  enum class Kind { none, clearance, terminal, input, state };
  Kind kind = Kind::none;
  int tau = -1;    // absolute time of the constrained state / input step
  int agent = -1;  // clearance violations only

  std::string describe() const;
};

/// Result of exact re-evaluation of every constraint on a candidate:
/// dynamics hold by construction (states are rolled out from the inputs),
/// so the certificate covers input boxes, state boxes, the terminal ball,
/// and the per-tau safe-set clearance.
struct FeasibilityCertificate {
  double worst_violation = -std::numeric_limits<double>::infinity();
  ConstraintRef worst;

  bool feasible(double tol) const { return worst_violation <= tol; }
};

struct SolverDiagnostics {
  int starts = 0;       // candidates evaluated (warm start + descents)
  long iterations = 0;  // descent iterations summed over starts and stages
};

/// Candidate plan used to initialize the solver; the tail of the previous
/// solution after the first step is applied.
struct WarmStart {
  std::vector<BicycleState> states;  // x_t .. x_T
  std::vector<BicycleInput> inputs;  // u_t .. u_{T-1}
};

/// One shrinking-horizon optimal control problem, posed at time t over the
/// remaining steps t..T.
struct MpcProblem {
  int t = 0;
  BicycleState current;
  MissionSpec mission;
  BicycleParams params;
  InputBounds input_bounds;
  /// Safe-set geometry for tau = t+1..T, in that order.
  std::vector<ConstraintSet> sets;
  std::optional<WarmStart> warm_start;

  int remaining() const { return mission.horizon - t; }
  void validate() const;
};

struct MpcSolution {
  int t = 0;
  std::vector<BicycleState> states;  // x_{t|t} .. x_{T|t}, rolled out from inputs
  std::vector<BicycleInput> inputs;  // u_{t|t} .. u_{T-1|t}
  double cost = 0.0;
  FeasibilityCertificate certificate;
  SolverDiagnostics diagnostics;
};

struct InfeasibleReport {
  FeasibilityCertificate best;  // least-violating candidate seen
  double best_cost = 0.0;
  SolverDiagnostics diagnostics;
};

using MpcResult = std::variant<MpcSolution, InfeasibleReport>;

/// Minimizes the remaining-mission cost subject to dynamics (single
/// shooting), the input box, optional state boxes, the terminal ball, and
/// signed_clearance >= 0 at every future tau. Candidates: the raw warm
/// start, descent-polished warm start, a steer-to-target heuristic, and
/// random restarts; each is certified by exact constraint re-evaluation and
/// the cheapest certified-feasible candidate wins (lowest index on ties).
MpcResult solve_step(const MpcProblem& problem, const SolverConfig& cfg);

/// Drops the first state and input of the previous solution; the remainder
/// satisfies the dynamics recursion from its own first state by construction.
WarmStart shift_warm_start(const MpcSolution& prev);

enum class ControllerKind { proposed, benchmark };

ControllerKind controller_from_string(const std::string& s);
std::string to_string(ControllerKind kind);

/// One closed-loop step: the state observed at time t, the solve outcome,
/// and the realized safety values at that state.
struct StepRecord {
  int t = 0;
  bool feasible = false;
  double cost = std::numeric_limits<double>::quiet_NaN();  // certified plan cost
  BicycleInput u;      // applied input (fallback when infeasible)
  BicycleState x;      // realized state at time t
  double min_clearance = 0.0;  // min over agents of ||p_t - Y_{t,j}||, meters
  double realized_c = 0.0;     // c(x_t, Y_t); >= 0 iff safe at time t
  SolverDiagnostics solver;
};

struct EpisodeLog {
  ControllerKind controller = ControllerKind::proposed;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;  // t = 0..T-1
  double terminal_realized_c = 0.0;  // c(x_T, Y_T)
  double terminal_error = 0.0;       // ||p_T - target||_inf
  double realized_cost = 0.0;        // sum over realized states of the stage cost
  bool ever_infeasible = false;
  int first_infeasible_step = -1;
  bool safe = false;  // c(x_t, Y_t) >= 0 for every t = 1..T (t = 0 is given)
  /// Exact-interval checks accumulated over the episode; both stay zero for
  /// the proposed controller by construction.
  long monotonicity_violations = 0;
  long warm_start_failures = 0;
  /// Snapshots of requested (t, tau) constraint sets, for plotting exports.
  std::vector<ConstraintSet> captured_sets;
};

/// Everything a closed-loop episode needs besides the realized agents.
struct ClosedLoopSetup {
  ControllerKind controller = ControllerKind::proposed;
  MissionSpec mission;
  BicycleParams params;
  InputBounds input_bounds;
  CollisionConstraint constraint;
  OneStepModel predictor;
  RegionTable regions;
  SolverConfig solver;
  std::vector<std::pair<int, int>> capture_pairs;  // (t, tau) snapshots to keep

  void validate() const;
};

/// Runs one episode: at each t, observe Y_t, predict the remaining steps,
/// update the constraint geometry (proposed: fold the newest squares into
/// running per-tau intersections; benchmark: rebuild from the newest regions
/// alone), solve, and apply the first input. After an infeasible solve the
/// episode continues under a zero-input fallback and keeps logging.
EpisodeLog run_closed_loop(const ClosedLoopSetup& setup, const Trajectory& agents, RngSeed seed);

/// Smallest calibration size whose quantile index is finite at this delta.
long min_calibration_size(double delta);

nlohmann::json step_record_to_json(const StepRecord& record);

}  // namespace cpmpc
