#pragma once

#include <Eigen/Core>
#include <json.hpp>
#include <optional>
#include <vector>

#include "cpmpc/constraints.hpp"
#include "cpmpc/errors.hpp"

namespace cpmpc {

/// Kinematic bicycle state: planar position, heading, forward speed.
/// The heading is not wrapped; it accumulates across steps.
struct BicycleState {
  double px = 0.0;     // meters
  double py = 0.0;     // meters
  double theta = 0.0;  // radians
  double v = 0.0;      // meters / second

  Point2 position() const { return Point2(px, py); }
  Eigen::Vector4d to_vector() const { return Eigen::Vector4d(px, py, theta, v); }
  static BicycleState from_vector(const Eigen::Vector4d& x) {
    return BicycleState{x[0], x[1], x[2], x[3]};
  }
  bool all_finite() const;
};

/// Steering angle and acceleration command for one step.
struct BicycleInput {
  double phi = 0.0;  // radians
  double a = 0.0;    // meters / second^2
};

struct BicycleParams {
  double length = 0.5;   // wheelbase, meters
  double delta = 0.125;  // sampling time, seconds

  void validate() const {
    if (!(length > 0.0) || !(delta > 0.0)) throw ConfigError("bicycle params must be positive");
  }
};

/// Box of admissible inputs.
struct InputBounds {
  double phi_lo = -M_PI / 6.0;
  double phi_hi = M_PI / 6.0;
  double a_lo = -5.0;
  double a_hi = 5.0;

  BicycleInput clamp(const BicycleInput& u) const;
  /// Worst violation of the box, <= 0 when u is admissible.
  double violation(const BicycleInput& u) const;
  void validate() const;
};

/// Per-step state set X_t as a componentwise box; infinite bounds mean the
/// component is unconstrained.
struct StateBox {
  Eigen::Vector4d lo = Eigen::Vector4d::Constant(-std::numeric_limits<double>::infinity());
  Eigen::Vector4d hi = Eigen::Vector4d::Constant(std::numeric_limits<double>::infinity());

  /// Worst violation of the box, <= 0 when x is admissible.
  double violation(const BicycleState& x) const;
};

/// The full control task: reach the target within the terminal tolerance
/// (infinity norm on position) at time T while minimizing the accumulated
/// squared distance of every position (terminal included) to the target.
struct MissionSpec {
  int horizon = 20;  // T
  BicycleState initial{3.5, -3.0, 0.0, 0.0};
  Point2 target{-1.8, 1.0};
  double terminal_tolerance = 0.05;  // meters, infinity norm
  double position_weight = 1.0;      // stage/terminal cost weight
  /// Per-step state sets; empty means all-space at every t < T. When present,
  /// must have horizon + 1 entries (index t).
  std::vector<StateBox> state_bounds;

  void validate() const;
};

/// One step of the displayed bicycle update:
///   px' = px + delta * v * cos(theta)
///   py' = py + delta * v * sin(theta)
///   theta' = theta + delta * (v / length) * tan(phi)
///   v' = v + delta * a
BicycleState bicycle_step(const BicycleState& x, const BicycleInput& u,
                          const BicycleParams& params);

/// States x_0..x_n produced by applying the n inputs in order from x0.
std::vector<BicycleState> rollout(const BicycleState& x0, const std::vector<BicycleInput>& inputs,
                                  const BicycleParams& params);

/// Sum over every state (terminal included) of weight * ||p - target||_2^2.
/// The case-study cost has no input term; inputs are only length-checked.
double evaluate_cost(const std::vector<BicycleState>& states,
                     const std::vector<BicycleInput>& inputs, const MissionSpec& spec);

nlohmann::json mission_to_json(const MissionSpec& spec);
MissionSpec mission_from_json(const nlohmann::json& j);

}  // namespace cpmpc
