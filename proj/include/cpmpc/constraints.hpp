#pragma once

#include <Eigen/Core>
#include <functional>
#include <json.hpp>
#include <vector>

#include "cpmpc/norms.hpp"
#include "cpmpc/trajectory.hpp"

namespace cpmpc {

using Point2 = Eigen::Vector2d;

/// Collision-avoidance constraint c(x, Y) = min_j ||p(x) - Y_j|| - margin,
/// positive exactly when the plant is safe against every agent. For the
/// infinity norm the map Y -> c(x, Y) is 1-Lipschitz, which is what lets a
/// region radius be traded for a constraint tightening.
struct CollisionConstraint {
  double safety_margin = 0.0;  // agent radius + vehicle length, meters
  double lipschitz_L = 1.0;
  Norm norm = Norm::infinity;
  /// Maps a full system state vector to the planar position p(x).
  /// Defaults to the first two components.
  std::function<Point2(const Eigen::VectorXd&)> position_extractor;

  Point2 position_of(const Eigen::VectorXd& state) const;
  void validate() const;
};

/// Axis-aligned planar box of predicted-unsafe positions. May be empty
/// (some lower bound exceeds its upper bound); the raw bounds are kept
/// as-is so interval comparisons between successive boxes stay exact.
struct UnsafeBox {
  double xlo = 0.0, xhi = 0.0, ylo = 0.0, yhi = 0.0;

  /// The square of positions within half_width (infinity norm) of center.
  static UnsafeBox square(const Point2& center, double half_width);

  bool empty() const { return xlo > xhi || ylo > yhi; }

  UnsafeBox intersect(const UnsafeBox& other) const;

  /// True iff this box is contained in the other (empty boxes are contained
  /// in everything).
  bool subset_of(const UnsafeBox& other) const;

  /// Infinity-norm signed distance from p to the box boundary: positive
  /// outside, negative inside, zero on the boundary.
  double signed_distance(const Point2& p) const;
};

/// The predicted-unsafe geometry at one time pair (t, tau): for each agent,
/// the intersection over s in provenance of the square centered at
/// Yhat_{tau|s, j} with half-width margin + C_{tau|s}. A position is in the
/// safe set exactly when it lies outside every agent's box.
struct ConstraintSet {
  int t = 0;
  int tau = 0;
  std::vector<UnsafeBox> boxes;  // one per agent
  std::vector<int> provenance;   // the s values whose regions were intersected
};

/// c(x, Y) evaluated at a planar position: min over agents of the distance
/// from p to the agent minus safety_margin. Positive iff safe.
double evaluate_c(const CollisionConstraint& constraint, const Point2& p, const JointState& agents,
                  const AgentLayout& layout);

/// Overload taking a full system state, routed through position_extractor.
double evaluate_c(const CollisionConstraint& constraint, const Eigen::VectorXd& state,
                  const JointState& agents, const AgentLayout& layout);

/// c(x, Yhat) - L * radius. Nonnegative values certify c(x, Y) >= 0 for any
/// truth Y within distance radius of the estimate. An infinite radius can
/// certify nothing and is rejected.
double tightened_constraint(const CollisionConstraint& constraint, const Point2& p,
                            const JointState& predicted, const AgentLayout& layout, double radius);

/// Folds the estimates Yhat_{tau|s} and radii C_{tau|s} for s = 0..t into
/// per-agent boxes. Entries with infinite radius cover the whole plane and
/// are skipped; at least one radius must be finite.
ConstraintSet build_constraint_set(const CollisionConstraint& constraint,
                                   const std::vector<JointState>& predictions,
                                   const std::vector<double>& radii, const AgentLayout& layout,
                                   int t, int tau);

/// Margin of the safe set at p: the minimum over nonempty agent boxes of the
/// signed distance from p to the box. Nonnegative iff p is safe at (t, tau);
/// +infinity when every box is empty.
double signed_clearance(const ConstraintSet& set, const Point2& p);

/// One JSON record per agent: {t, tau, agent, box: [xlo, xhi, ylo, yhi]},
/// with "empty" in place of the bounds for an empty box.
nlohmann::json constraint_set_to_json(const ConstraintSet& set);

}  // namespace cpmpc
