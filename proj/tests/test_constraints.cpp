#include <doctest.h>

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <vector>

#include <cpmpc/constraints.hpp>
#include <cpmpc/rng.hpp>

using namespace cpmpc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CollisionConstraint case_study_constraint() {
  CollisionConstraint c;
  c.safety_margin = 0.6;
  c.lipschitz_L = 1.0;
  c.norm = Norm::infinity;
  return c;
}

JointState stack(std::initializer_list<Point2> agents) {
  JointState y(2 * static_cast<Eigen::Index>(agents.size()));
  Eigen::Index i = 0;
  for (const Point2& a : agents) {
    y.segment(2 * i, 2) = a;
    ++i;
  }
  return y;
}

// Literal relaxed constraint: the position is admissible at (t, tau) iff for
// SOME provenance step s, EVERY agent satisfies the tightened constraint
// using only that step's estimate and radius. This is the reference the box
// geometry must reproduce per agent.
bool per_agent_reference(const CollisionConstraint& c, const Point2& p,
                         const std::vector<JointState>& predictions,
                         const std::vector<double>& radii, const AgentLayout& layout) {
  for (int j = 0; j < layout.num_agents; ++j) {
    bool agent_ok = false;
    for (std::size_t s = 0; s < predictions.size(); ++s) {
      if (!(radii[s] < kInf)) continue;
      const Point2 center = agent_block(predictions[s], layout, j);
      const double dist = vector_norm(Eigen::Vector2d(p - center), c.norm);
      if (dist - c.safety_margin - c.lipschitz_L * radii[s] >= 0.0) {
        agent_ok = true;
        break;
      }
    }
    if (!agent_ok) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("evaluate_c hand values") {
  const CollisionConstraint c = case_study_constraint();
  const AgentLayout layout{2, 2};
  const JointState y = stack({{1.0, 0.0}, {-2.0, 3.0}});

  // Distances from the origin (infinity norm): 1 and 3; min - margin = 0.4.
  CHECK(evaluate_c(c, Point2(0.0, 0.0), y, layout) == doctest::Approx(0.4).epsilon(1e-15));
  // At (1, 0.25) the nearest agent is 0.25 away: violated by 0.35.
  CHECK(evaluate_c(c, Point2(1.0, 0.25), y, layout) ==
        doctest::Approx(-0.35).epsilon(1e-15));

  // Euclidean variant with a free Lipschitz constant.
  CollisionConstraint e = c;
  e.norm = Norm::euclidean;
  e.lipschitz_L = 2.0;
  CHECK(evaluate_c(e, Point2(0.0, 0.0), y, layout) ==
        doctest::Approx(1.0 - 0.6).epsilon(1e-15));

  // The full-state overload routes through the position extractor.
  Eigen::VectorXd state(4);
  state << 0.0, 0.0, 9.9, 9.9;  // heading/speed must be ignored
  CHECK(evaluate_c(c, state, y, layout) == doctest::Approx(0.4).epsilon(1e-15));

  CHECK_THROWS_AS(evaluate_c(c, Point2(0, 0), JointState::Zero(3), layout), ConfigError);
}

TEST_CASE("constraint validation pins the infinity-norm Lipschitz constant") {
  CollisionConstraint c = case_study_constraint();
  CHECK_NOTHROW(c.validate());
  c.lipschitz_L = 2.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.norm = Norm::euclidean;
  CHECK_NOTHROW(c.validate());  // free constant away from the pinned case
  c.lipschitz_L = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.lipschitz_L = 1.0;
  c.safety_margin = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("map from agent states to c is 1-Lipschitz in the infinity norm") {
  const CollisionConstraint c = case_study_constraint();
  const AgentLayout layout{3, 2};
  Rng rng(RngSeed{31});

  for (int trial = 0; trial < 100000; ++trial) {
    JointState y1(6), dy(6);
    for (int d = 0; d < 6; ++d) {
      y1[d] = rng.uniform(-5.0, 5.0);
      dy[d] = rng.uniform(-1.0, 1.0);
    }
    const JointState y2 = y1 + dy;
    const Point2 p(rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0));

    // Perturbation size: max over agents of the per-agent infinity norm.
    double perturbation = 0.0;
    for (int j = 0; j < 3; ++j)
      perturbation = std::max(perturbation,
                              vector_norm(agent_block(dy, layout, j), Norm::infinity));

    const double gap = std::abs(evaluate_c(c, p, y1, layout) - evaluate_c(c, p, y2, layout));
    CHECK(gap <= perturbation + 1e-12);
  }
}

TEST_CASE("tightened constraint certifies the true constraint within the region") {
  const CollisionConstraint c = case_study_constraint();
  const AgentLayout layout{2, 2};
  Rng rng(RngSeed{77});

  long certified = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    JointState predicted(4);
    for (int d = 0; d < 4; ++d) predicted[d] = rng.uniform(-3.0, 3.0);
    const double radius = rng.uniform(0.0, 1.5);
    const Point2 p(rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0));

    if (tightened_constraint(c, p, predicted, layout, radius) < 0.0) continue;
    ++certified;

    // Any truth within `radius` of the estimate (per-agent infinity norm)
    // must satisfy the untightened constraint.
    for (int k = 0; k < 10; ++k) {
      JointState truth = predicted;
      for (int d = 0; d < 4; ++d) truth[d] += rng.uniform(-radius, radius);
      CHECK(evaluate_c(c, p, truth, layout) >= -1e-12);
    }
  }
  CHECK(certified > 1000);  // the sample must actually exercise the certificate

  CHECK_THROWS_AS(tightened_constraint(c, Point2(0, 0), stack({{0, 0}, {1, 1}}), layout, kInf),
                  CalibrationInfeasibleError);
}

TEST_CASE("unsafe box algebra: square, intersect, empty, subset, distance") {
  const UnsafeBox a = UnsafeBox::square(Point2(1.0, -1.0), 0.5);
  CHECK(a.xlo == 0.5);
  CHECK(a.xhi == 1.5);
  CHECK(a.ylo == -1.5);
  CHECK(a.yhi == -0.5);
  CHECK_FALSE(a.empty());

  const UnsafeBox b = UnsafeBox::square(Point2(2.0, -1.0), 0.75);
  const UnsafeBox ab = a.intersect(b);
  CHECK(ab.xlo == 1.25);
  CHECK(ab.xhi == 1.5);
  CHECK_FALSE(ab.empty());
  CHECK(ab.subset_of(a));
  CHECK(ab.subset_of(b));
  CHECK_FALSE(a.subset_of(b));

  // Disjoint boxes intersect to an empty box, which is a subset of anything.
  const UnsafeBox far = UnsafeBox::square(Point2(10.0, 10.0), 1.0);
  const UnsafeBox none = a.intersect(far);
  CHECK(none.empty());
  CHECK(none.subset_of(a));
  CHECK(none.subset_of(far));

  // Signed distance: negative inside, positive outside, zero on the border.
  CHECK(a.signed_distance(Point2(1.0, -1.0)) == -0.5);
  CHECK(a.signed_distance(Point2(1.5, -1.0)) == 0.0);
  CHECK(a.signed_distance(Point2(2.5, -1.0)) == 1.0);
  CHECK(a.signed_distance(Point2(1.0, 0.5)) == 1.0);
}

TEST_CASE("constraint set folds estimates into per-agent box intersections") {
  const CollisionConstraint c = case_study_constraint();
  const AgentLayout layout{2, 2};

  // Two provenance steps; agent 0 drifts right, agent 1 stays put.
  const std::vector<JointState> predictions{stack({{0.0, 0.0}, {5.0, 5.0}}),
                                            stack({{0.4, 0.0}, {5.0, 5.0}})};
  const std::vector<double> radii{0.4, 0.2};

  const ConstraintSet set = build_constraint_set(c, predictions, radii, layout, 1, 3);
  CHECK(set.t == 1);
  CHECK(set.tau == 3);
  CHECK(set.provenance == std::vector<int>{0, 1});
  REQUIRE(set.boxes.size() == 2);
  // Agent 0: [-1, 1] from step 0 (half 1.0) meets [-0.4, 1.2] from step 1.
  CHECK(set.boxes[0].xlo == -0.4);
  CHECK(set.boxes[0].xhi == 1.0);
  CHECK(set.boxes[0].ylo == -0.8);
  CHECK(set.boxes[0].yhi == 0.8);
  // Agent 1: same center twice, the smaller square wins.
  CHECK(set.boxes[1].xlo == 4.2);
  CHECK(set.boxes[1].xhi == 5.8);

  // Infinite radii are skipped; an all-infinite fold cannot certify anything.
  const ConstraintSet skip =
      build_constraint_set(c, predictions, {kInf, 0.2}, layout, 1, 3);
  CHECK(skip.provenance == std::vector<int>{1});
  CHECK(skip.boxes[0].xhi == 0.4 + (0.6 + 1.0 * 0.2));  // one ulp above 1.2
  CHECK_THROWS_AS(build_constraint_set(c, predictions, {kInf, kInf}, layout, 1, 3),
                  CalibrationInfeasibleError);
  CHECK_THROWS_AS(build_constraint_set(c, predictions, {0.1}, layout, 1, 3), ConfigError);
}

TEST_CASE("box membership equals the per-agent reference on random instances") {
  const CollisionConstraint c = case_study_constraint();
  const AgentLayout layout{2, 2};
  Rng rng(RngSeed{20260814});

  long disagreements = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int steps = 1 + static_cast<int>(rng.below(4));
    std::vector<JointState> predictions;
    std::vector<double> radii;
    for (int s = 0; s < steps; ++s) {
      JointState y(4);
      for (int d = 0; d < 4; ++d) y[d] = rng.uniform(-2.0, 2.0);
      predictions.push_back(y);
      radii.push_back(rng.uniform(0.0, 1.0));
    }
    const ConstraintSet set = build_constraint_set(c, predictions, radii, layout, 0, 1);
    const Point2 p(rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0));

    const bool via_boxes = signed_clearance(set, p) >= 0.0;
    const bool via_reference = per_agent_reference(c, p, predictions, radii, layout);
    if (via_boxes != via_reference) ++disagreements;
  }
  CHECK(disagreements == 0);
}

TEST_CASE("a single provenance step certifying all agents implies box safety") {
  // Stricter variant: one step s whose tightened constraint holds for every
  // agent simultaneously. Positions admissible under it must also be
  // admissible under the per-agent fold (which may pick different steps for
  // different agents, so it admits more).
  const CollisionConstraint c = case_study_constraint();
  const AgentLayout layout{2, 2};
  Rng rng(RngSeed{4242});

  long stricter_hits = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<JointState> predictions;
    std::vector<double> radii;
    const int steps = 1 + static_cast<int>(rng.below(3));
    for (int s = 0; s < steps; ++s) {
      JointState y(4);
      for (int d = 0; d < 4; ++d) y[d] = rng.uniform(-2.0, 2.0);
      predictions.push_back(y);
      radii.push_back(rng.uniform(0.0, 0.8));
    }
    const Point2 p(rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0));

    bool one_step_ok = false;
    for (std::size_t s = 0; s < predictions.size() && !one_step_ok; ++s)
      one_step_ok = tightened_constraint(c, p, predictions[s], layout, radii[s]) >= 0.0;
    if (!one_step_ok) continue;
    ++stricter_hits;

    const ConstraintSet set = build_constraint_set(c, predictions, radii, layout, 0, 1);
    CHECK(signed_clearance(set, p) >= 0.0);
  }
  CHECK(stricter_hits > 1000);
}

TEST_CASE("signed clearance is +infinity when every box is empty") {
  ConstraintSet set;
  set.boxes.push_back(UnsafeBox{1.0, 0.0, 0.0, 1.0});  // xlo > xhi: empty
  CHECK(signed_clearance(set, Point2(0.0, 0.0)) == kInf);

  set.boxes.push_back(UnsafeBox::square(Point2(0.0, 0.0), 1.0));
  CHECK(signed_clearance(set, Point2(0.0, 0.0)) == -1.0);
  CHECK(signed_clearance(set, Point2(3.0, 0.0)) == 2.0);
}

TEST_CASE("folding more steps only shrinks the unsafe boxes") {
  const CollisionConstraint c = case_study_constraint();
  const AgentLayout layout{1, 2};
  Rng rng(RngSeed{9});

  for (int trial = 0; trial < 200; ++trial) {
    std::vector<JointState> predictions;
    std::vector<double> radii;
    ConstraintSet previous;
    for (int s = 0; s < 5; ++s) {
      JointState y(2);
      y << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
      predictions.push_back(y);
      radii.push_back(rng.uniform(0.05, 0.8));
      const ConstraintSet now = build_constraint_set(c, predictions, radii, layout, s, 6);
      if (s > 0) CHECK(now.boxes[0].subset_of(previous.boxes[0]));
      previous = now;
    }
  }
}

TEST_CASE("constraint set JSON uses 'empty' for empty boxes") {
  ConstraintSet set;
  set.t = 2;
  set.tau = 5;
  set.boxes.push_back(UnsafeBox{0.0, 1.0, 0.0, 1.0});
  set.boxes.push_back(UnsafeBox{3.0, 2.0, 0.0, 1.0});

  const nlohmann::json j = constraint_set_to_json(set);
  REQUIRE(j.size() == 2);
  CHECK(j[0]["t"] == 2);
  CHECK(j[0]["tau"] == 5);
  CHECK(j[0]["agent"] == 0);
  CHECK(j[0]["box"][1] == 1.0);
  CHECK(j[1]["box"] == "empty");
}
