#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <variant>
#include <vector>

#include <cpmpc/mpc.hpp>

using namespace cpmpc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Constraint sets with no agents: every position is safe.
std::vector<ConstraintSet> free_sets(int t, int T) {
  std::vector<ConstraintSet> sets;
  for (int tau = t + 1; tau <= T; ++tau) {
    ConstraintSet s;
    s.t = t;
    s.tau = tau;
    sets.push_back(std::move(s));
  }
  return sets;
}

MpcProblem base_problem(int t, int T, const BicycleState& current, const Point2& target) {
  MpcProblem p;
  p.t = t;
  p.current = current;
  p.mission.horizon = T;
  p.mission.initial = current;
  p.mission.target = target;
  p.mission.terminal_tolerance = 0.05;
  p.params = BicycleParams{0.5, 0.125};
  p.sets = free_sets(t, T);
  return p;
}

SolverConfig quick_solver(std::uint64_t seed) {
  SolverConfig cfg;
  cfg.max_inner_iterations = 60;
  cfg.random_restarts = 2;
  cfg.seed = RngSeed{seed};
  return cfg;
}

double plan_cost(const MpcProblem& p, const std::vector<BicycleInput>& inputs) {
  return evaluate_cost(rollout(p.current, inputs, p.params), inputs, p.mission);
}

}  // namespace

TEST_CASE("shift_warm_start drops exactly the applied step") {
  MpcSolution prev;
  prev.t = 3;
  prev.states = {{0, 0, 0, 0}, {1, 0, 0, 1}, {2, 0, 0, 2}};
  prev.inputs = {{0.1, 1.0}, {0.2, 2.0}};

  const WarmStart shifted = shift_warm_start(prev);
  REQUIRE(shifted.states.size() == 2);
  REQUIRE(shifted.inputs.size() == 1);
  CHECK(shifted.states[0].px == 1.0);
  CHECK(shifted.states[1].v == 2.0);
  CHECK(shifted.inputs[0].phi == 0.2);

  MpcSolution empty;
  CHECK_THROWS_AS(shift_warm_start(empty), ConfigError);
}

TEST_CASE("problem validation rejects malformed instances") {
  MpcProblem p = base_problem(0, 3, BicycleState{0, 0, 0, 0}, Point2(1, 1));
  CHECK_NOTHROW(p.validate());

  MpcProblem wrong_count = p;
  wrong_count.sets.pop_back();
  CHECK_THROWS_AS(wrong_count.validate(), ConfigError);

  MpcProblem out_of_order = p;
  std::swap(out_of_order.sets[0], out_of_order.sets[1]);
  CHECK_THROWS_AS(out_of_order.validate(), ConfigError);

  MpcProblem bad_t = p;
  bad_t.t = 3;
  CHECK_THROWS_AS(bad_t.validate(), ConfigError);

  MpcProblem short_warm = p;
  short_warm.warm_start = WarmStart{{{0, 0, 0, 0}, {0, 0, 0, 0}}, {{0, 0}}};
  CHECK_THROWS_AS(short_warm.validate(), ConfigError);
}

TEST_CASE("final-step solve returns a certified plan inside the terminal ball") {
  // Standing 0.03 from the target with zero speed: the terminal position is
  // already inside the ball regardless of the input.
  const BicycleState x{-1.83, 1.0, 0.4, 0.0};
  MpcProblem p = base_problem(19, 20, x, Point2(-1.8, 1.0));

  const MpcResult result = solve_step(p, quick_solver(1));
  REQUIRE(std::holds_alternative<MpcSolution>(result));
  const auto& sol = std::get<MpcSolution>(result);
  CHECK(sol.certificate.feasible(1e-6));
  REQUIRE(sol.inputs.size() == 1);
  REQUIRE(sol.states.size() == 2);
  const double terminal_err = std::max(std::abs(sol.states[1].px + 1.8),
                                       std::abs(sol.states[1].py - 1.0));
  CHECK(terminal_err <= 0.05);
  // One-step cost is input-invariant here: both states sit at the start.
  CHECK(sol.cost == doctest::Approx(2.0 * (0.03 * 0.03)).epsilon(1e-12));
}

TEST_CASE("final-step certified cost equals an input-box grid search") {
  // The one-step position is fully determined by the current state, so every
  // admissible input has identical cost; the solver must report exactly it.
  const InputBounds ub;
  for (int inst = 0; inst < 5; ++inst) {
    const double theta = 0.7 * inst - 1.0;
    const BicycleState x{0.02 * inst, -0.01 * inst, theta, 0.2};
    // Target placed so the drifted position stays inside the ball.
    const Point2 target(x.px + 0.125 * x.v * std::cos(theta),
                        x.py + 0.125 * x.v * std::sin(theta));
    MpcProblem p = base_problem(19, 20, x, target);

    double grid_best = kInf;
    for (int i = 0; i < 200; ++i)
      for (int j = 0; j < 200; ++j) {
        const BicycleInput u{ub.phi_lo + (ub.phi_hi - ub.phi_lo) * i / 199.0,
                             ub.a_lo + (ub.a_hi - ub.a_lo) * j / 199.0};
        grid_best = std::min(grid_best, plan_cost(p, {u}));
      }

    const MpcResult result = solve_step(p, quick_solver(inst + 10));
    REQUIRE(std::holds_alternative<MpcSolution>(result));
    CHECK(std::abs(std::get<MpcSolution>(result).cost - grid_best) < 1e-12);
  }
}

TEST_CASE("two-step certified cost matches a grid over the first input") {
  // With zero initial speed only the first acceleration moves the terminal
  // position (along the fixed heading), so a 2-D grid over the first input
  // with the second input pinned scans the entire cost range.
  const InputBounds ub;
  for (int inst = 0; inst < 5; ++inst) {
    const double theta = -2.0 + 0.9 * inst;
    const BicycleState x{0.3 * inst, 0.1 - 0.2 * inst, theta, 0.0};
    const double s = -0.06 + 0.025 * inst;  // reachable: |s| <= 5/64
    const Point2 target(x.px + s * std::cos(theta), x.py + s * std::sin(theta));
    MpcProblem p = base_problem(18, 20, x, target);

    double grid_best = kInf;
    for (int i = 0; i < 200; ++i)
      for (int j = 0; j < 200; ++j) {
        const BicycleInput u0{ub.phi_lo + (ub.phi_hi - ub.phi_lo) * i / 199.0,
                              ub.a_lo + (ub.a_hi - ub.a_lo) * j / 199.0};
        const std::vector<BicycleInput> plan{u0, BicycleInput{0.0, 0.0}};
        const auto states = rollout(x, plan, p.params);
        const double terminal = std::max(std::abs(states[2].px - target.x()),
                                         std::abs(states[2].py - target.y()));
        if (terminal > p.mission.terminal_tolerance) continue;
        grid_best = std::min(grid_best, plan_cost(p, plan));
      }
    REQUIRE(grid_best < kInf);

    const MpcResult result = solve_step(p, quick_solver(inst + 20));
    REQUIRE(std::holds_alternative<MpcSolution>(result));
    CHECK(std::abs(std::get<MpcSolution>(result).cost - grid_best) <= 1e-2);
  }
}

TEST_CASE("infeasible solves name the blocking constraint") {
  // Unreachable target: standing still one meter away at the last step.
  MpcProblem far = base_problem(19, 20, BicycleState{0, 0, 0, 0}, Point2(1.0, 0.0));
  const MpcResult r1 = solve_step(far, quick_solver(3));
  REQUIRE(std::holds_alternative<InfeasibleReport>(r1));
  const auto& rep1 = std::get<InfeasibleReport>(r1);
  CHECK(rep1.best.worst.kind == ConstraintRef::Kind::terminal);
  CHECK(rep1.best.worst.tau == 20);
  CHECK(rep1.best.worst_violation == doctest::Approx(0.95).epsilon(1e-9));
  CHECK(rep1.best.worst.describe() == "terminal(tau=20)");

  // Reachable target but the whole neighborhood is predicted unsafe.
  MpcProblem blocked = base_problem(19, 20, BicycleState{0, 0, 0, 0}, Point2(0.0, 0.0));
  blocked.sets[0].boxes.push_back(UnsafeBox::square(Point2(0.0, 0.0), 3.0));
  const MpcResult r2 = solve_step(blocked, quick_solver(4));
  REQUIRE(std::holds_alternative<InfeasibleReport>(r2));
  const auto& rep2 = std::get<InfeasibleReport>(r2);
  CHECK(rep2.best.worst.kind == ConstraintRef::Kind::clearance);
  CHECK(rep2.best.worst.tau == 20);
  CHECK(rep2.best.worst.agent == 0);
  CHECK(rep2.best.worst_violation > 2.0);  // deep inside the box
}

TEST_CASE("a feasible warm start is never lost and never worsened") {
  // Inside the terminal ball with zero speed: all-zero inputs are feasible
  // but deliberately suboptimal (the robot could close the last 4 cm).
  const BicycleState x{-1.84, 1.0, 0.0, 0.0};
  MpcProblem p = base_problem(16, 20, x, Point2(-1.8, 1.0));

  WarmStart warm;
  warm.inputs.assign(4, BicycleInput{0.0, 0.0});
  warm.states = rollout(x, warm.inputs, p.params);
  p.warm_start = warm;
  const double warm_cost = plan_cost(p, warm.inputs);

  const MpcResult result = solve_step(p, quick_solver(5));
  REQUIRE(std::holds_alternative<MpcSolution>(result));
  const auto& sol = std::get<MpcSolution>(result);
  CHECK(sol.certificate.feasible(1e-6));
  CHECK(sol.cost <= warm_cost);
  CHECK(sol.diagnostics.starts >= 4);  // warm, polished warm, restarts
}

TEST_CASE("solves are deterministic in the solver seed") {
  const BicycleState x{0.5, -0.4, 1.2, 0.3};
  MpcProblem p = base_problem(15, 20, x, Point2(0.55, -0.3));
  p.sets[2].boxes.push_back(UnsafeBox::square(Point2(0.7, -0.2), 0.15));

  const MpcResult a = solve_step(p, quick_solver(99));
  const MpcResult b = solve_step(p, quick_solver(99));
  REQUIRE(std::holds_alternative<MpcSolution>(a));
  REQUIRE(std::holds_alternative<MpcSolution>(b));
  const auto& sa = std::get<MpcSolution>(a);
  const auto& sb = std::get<MpcSolution>(b);
  CHECK(sa.cost == sb.cost);
  REQUIRE(sa.inputs.size() == sb.inputs.size());
  for (std::size_t i = 0; i < sa.inputs.size(); ++i) {
    CHECK(sa.inputs[i].phi == sb.inputs[i].phi);
    CHECK(sa.inputs[i].a == sb.inputs[i].a);
  }
  CHECK(sa.certificate.worst_violation == sb.certificate.worst_violation);
}

TEST_CASE("solutions respect the input box exactly") {
  const BicycleState x{3.5, -3.0, 2.495079505712558, 0.0};
  MpcProblem p = base_problem(0, 8, x, Point2(2.9, -2.4));
  const MpcResult result = solve_step(p, quick_solver(6));
  REQUIRE(std::holds_alternative<MpcSolution>(result));
  const InputBounds ub;
  for (const BicycleInput& u : std::get<MpcSolution>(result).inputs) {
    CHECK(u.phi >= ub.phi_lo);
    CHECK(u.phi <= ub.phi_hi);
    CHECK(u.a >= ub.a_lo);
    CHECK(u.a <= ub.a_hi);
  }
}

TEST_CASE("solver config validation") {
  SolverConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.penalty_growth = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SolverConfig{};
  cfg.max_inner_iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SolverConfig{};
  cfg.armijo_c = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
