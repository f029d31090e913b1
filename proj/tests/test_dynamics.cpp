#include <doctest.h>

#include <cmath>
#include <vector>

#include <cpmpc/dynamics.hpp>
#include <cpmpc/rng.hpp>

using namespace cpmpc;

TEST_CASE("bicycle step hand values") {
  const BicycleParams params{0.5, 0.125};
  const BicycleState x{1.0, 2.0, M_PI / 6.0, 2.0};
  const BicycleInput u{0.1, -1.0};

  const BicycleState next = bicycle_step(x, u, params);
  // px + delta*v*cos(theta) = 1 + 0.25*cos(30deg)
  CHECK(next.px == doctest::Approx(1.0 + 0.25 * std::sqrt(3.0) / 2.0).epsilon(1e-15));
  // py + delta*v*sin(theta) = 2 + 0.25*0.5
  CHECK(next.py == doctest::Approx(2.125).epsilon(1e-15));
  // theta + delta*(v/length)*tan(phi) = pi/6 + 0.5*tan(0.1)
  CHECK(next.theta == doctest::Approx(M_PI / 6.0 + 0.5 * std::tan(0.1)).epsilon(1e-15));
  // v + delta*a
  CHECK(next.v == doctest::Approx(1.875).epsilon(1e-15));

  // Zero speed: position and heading freeze, only v integrates.
  const BicycleState parked = bicycle_step(BicycleState{3.0, -1.0, 0.7, 0.0},
                                           BicycleInput{0.5, 2.0}, params);
  CHECK(parked.px == 3.0);
  CHECK(parked.py == -1.0);
  CHECK(parked.theta == 0.7);
  CHECK(parked.v == 0.25);

  // Straight line at unit speed, zero steering.
  const BicycleState straight =
      bicycle_step(BicycleState{0.0, 0.0, 0.0, 1.0}, BicycleInput{0.0, 0.0}, params);
  CHECK(straight.px == 0.125);
  CHECK(straight.py == 0.0);
  CHECK(straight.theta == 0.0);
  CHECK(straight.v == 1.0);
}

TEST_CASE("bicycle step matches a long-double reference on random inputs") {
  const BicycleParams params{0.5, 0.125};
  Rng rng(RngSeed{101});

  for (int trial = 0; trial < 10000; ++trial) {
    const BicycleState x{rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0),
                         rng.uniform(-6.0, 6.0), rng.uniform(-3.0, 3.0)};
    const BicycleInput u{rng.uniform(-0.5, 0.5), rng.uniform(-5.0, 5.0)};
    const BicycleState next = bicycle_step(x, u, params);

    const long double d = 0.125L, len = 0.5L;
    const long double px = (long double)x.px + d * (long double)x.v * cosl((long double)x.theta);
    const long double py = (long double)x.py + d * (long double)x.v * sinl((long double)x.theta);
    const long double th =
        (long double)x.theta + d * ((long double)x.v / len) * tanl((long double)u.phi);
    const long double v = (long double)x.v + d * (long double)u.a;

    auto rel = [](double got, long double want) {
      const long double scale = std::max<long double>(1.0L, fabsl(want));
      return fabsl((long double)got - want) / scale;
    };
    CHECK(rel(next.px, px) < 1e-12);
    CHECK(rel(next.py, py) < 1e-12);
    CHECK(rel(next.theta, th) < 1e-12);
    CHECK(rel(next.v, v) < 1e-12);
  }
}

TEST_CASE("rollout composes single steps and keeps the initial state") {
  const BicycleParams params{0.5, 0.125};
  const BicycleState x0{3.5, -3.0, 2.495079505712558, 0.0};
  const std::vector<BicycleInput> inputs{{0.2, 3.0}, {-0.1, 1.0}, {0.0, -2.0}};

  const auto states = rollout(x0, inputs, params);
  REQUIRE(states.size() == 4);
  CHECK(states[0].px == x0.px);
  CHECK(states[0].v == x0.v);

  BicycleState manual = x0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    manual = bicycle_step(manual, inputs[k], params);
    CHECK(states[k + 1].px == manual.px);
    CHECK(states[k + 1].py == manual.py);
    CHECK(states[k + 1].theta == manual.theta);
    CHECK(states[k + 1].v == manual.v);
  }

  CHECK(rollout(x0, {}, params).size() == 1);
}

TEST_CASE("cost accumulates squared target distance over every state") {
  MissionSpec spec;
  spec.horizon = 2;
  spec.target = Point2(0.0, 0.0);
  spec.position_weight = 1.0;

  // Positions at distances 2, 1, 2 from the target: cost = 4 + 1 + 4.
  const std::vector<BicycleState> states{{2.0, 0.0, 0.0, 0.0},
                                         {0.0, 1.0, 0.0, 0.0},
                                         {-2.0, 0.0, 0.0, 0.0}};
  const std::vector<BicycleInput> inputs(2);
  CHECK(evaluate_cost(states, inputs, spec) == 9.0);

  spec.position_weight = 0.5;
  CHECK(evaluate_cost(states, inputs, spec) == 4.5);

  CHECK_THROWS_AS(evaluate_cost(states, std::vector<BicycleInput>(1), spec), ConfigError);
}

TEST_CASE("input bounds clamp and measure violations consistently") {
  InputBounds ub;  // phi in [-pi/6, pi/6], a in [-5, 5]
  CHECK_NOTHROW(ub.validate());

  CHECK(ub.violation(BicycleInput{0.0, 0.0}) < 0.0);
  CHECK(ub.violation(BicycleInput{ub.phi_hi, ub.a_lo}) == 0.0);
  CHECK(ub.violation(BicycleInput{ub.phi_hi + 0.25, 0.0}) ==
        doctest::Approx(0.25).epsilon(1e-12));
  CHECK(ub.violation(BicycleInput{0.0, -7.5}) == doctest::Approx(2.5).epsilon(1e-12));

  const BicycleInput clamped = ub.clamp(BicycleInput{1.0, 100.0});
  CHECK(clamped.phi == ub.phi_hi);
  CHECK(clamped.a == 5.0);
  CHECK(ub.violation(clamped) <= 0.0);

  InputBounds bad;
  bad.phi_lo = 1.0;
  bad.phi_hi = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("state boxes default to all-space and measure componentwise violation") {
  const StateBox free_box;
  CHECK(free_box.violation(BicycleState{1e9, -1e9, 50.0, -50.0}) ==
        -std::numeric_limits<double>::infinity());

  StateBox box;
  box.lo << -1.0, -1.0, -10.0, 0.0;
  box.hi << 1.0, 1.0, 10.0, 2.0;
  CHECK(box.violation(BicycleState{0.0, 0.0, 0.0, 1.0}) < 0.0);
  CHECK(box.violation(BicycleState{1.5, 0.0, 0.0, 1.0}) == doctest::Approx(0.5));
  CHECK(box.violation(BicycleState{0.0, 0.0, 0.0, -0.25}) == doctest::Approx(0.25));
}

TEST_CASE("mission validation and JSON round-trip") {
  MissionSpec spec;
  spec.horizon = 20;
  spec.initial = BicycleState{3.5, -3.0, 2.495079505712558, 0.0};
  spec.target = Point2(-1.8, 1.0);
  spec.terminal_tolerance = 0.05;
  CHECK_NOTHROW(spec.validate());

  const MissionSpec back = mission_from_json(mission_to_json(spec));
  CHECK(back.horizon == 20);
  CHECK(back.initial.theta == spec.initial.theta);
  CHECK(back.target == spec.target);
  CHECK(back.terminal_tolerance == 0.05);
  CHECK(back.position_weight == 1.0);

  MissionSpec bad = spec;
  bad.horizon = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.terminal_tolerance = -0.01;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.state_bounds.resize(5);  // must be horizon + 1 = 21
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.state_bounds.resize(21);
  CHECK_NOTHROW(bad.validate());
}
