#include "cpmpc/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cpmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_planar(const AgentLayout& layout, const char* who) {
  layout.validate();
  if (layout.agent_dim != 2)
    throw ConfigError(std::string(who) + ": box geometry needs planar agents (agent_dim == 2)");
}

}  // namespace

Point2 CollisionConstraint::position_of(const Eigen::VectorXd& state) const {
  if (position_extractor) return position_extractor(state);
  if (state.size() < 2) throw ConfigError("state too short to extract a planar position");
  return state.head<2>();
}

void CollisionConstraint::validate() const {
  if (!(safety_margin >= 0.0)) throw ConfigError("safety_margin must be >= 0");
  if (!(lipschitz_L > 0.0)) throw ConfigError("lipschitz_L must be positive");
  // For the infinity-norm min-distance form the exact constant is 1; any
  // other value would silently mis-scale the tightening.
  if (norm == Norm::infinity && lipschitz_L != 1.0)
    throw ConfigError("infinity-norm min-distance constraint has Lipschitz constant exactly 1");
}

UnsafeBox UnsafeBox::square(const Point2& center, double half_width) {
  return UnsafeBox{center.x() - half_width, center.x() + half_width, center.y() - half_width,
                   center.y() + half_width};
}

UnsafeBox UnsafeBox::intersect(const UnsafeBox& other) const {
  return UnsafeBox{std::max(xlo, other.xlo), std::min(xhi, other.xhi), std::max(ylo, other.ylo),
                   std::min(yhi, other.yhi)};
}

bool UnsafeBox::subset_of(const UnsafeBox& other) const {
  if (empty()) return true;
  return xlo >= other.xlo && xhi <= other.xhi && ylo >= other.ylo && yhi <= other.yhi;
}

double UnsafeBox::signed_distance(const Point2& p) const {
  const double dx = std::max(xlo - p.x(), p.x() - xhi);
  const double dy = std::max(ylo - p.y(), p.y() - yhi);
  return std::max(dx, dy);
}

double evaluate_c(const CollisionConstraint& constraint, const Point2& p, const JointState& agents,
                  const AgentLayout& layout) {
  require_planar(layout, "evaluate_c");
  if (agents.size() != layout.joint_dim()) throw ConfigError("evaluate_c: joint state size");

  double closest = kInf;
  for (int j = 0; j < layout.num_agents; ++j) {
    const Eigen::Vector2d diff = p - agent_block(agents, layout, j);
    closest = std::min(closest, vector_norm(diff, constraint.norm));
  }
  return closest - constraint.safety_margin;
}

double evaluate_c(const CollisionConstraint& constraint, const Eigen::VectorXd& state,
                  const JointState& agents, const AgentLayout& layout) {
  return evaluate_c(constraint, constraint.position_of(state), agents, layout);
}

double tightened_constraint(const CollisionConstraint& constraint, const Point2& p,
                            const JointState& predicted, const AgentLayout& layout,
                            double radius) {
  if (!(radius < kInf))
    throw CalibrationInfeasibleError(
        "tightened_constraint: infinite region radius certifies nothing", 0);
  return evaluate_c(constraint, p, predicted, layout) - constraint.lipschitz_L * radius;
}

ConstraintSet build_constraint_set(const CollisionConstraint& constraint,
                                   const std::vector<JointState>& predictions,
                                   const std::vector<double>& radii, const AgentLayout& layout,
                                   int t, int tau) {
  constraint.validate();
  require_planar(layout, "build_constraint_set");
  if (predictions.size() != radii.size() || predictions.empty())
    throw ConfigError("build_constraint_set: need matching, nonempty predictions and radii");

  ConstraintSet set;
  set.t = t;
  set.tau = tau;
  set.boxes.assign(layout.num_agents, UnsafeBox{-kInf, kInf, -kInf, kInf});

  for (std::size_t s = 0; s < predictions.size(); ++s) {
    if (!(radii[s] < kInf)) continue;  // infinite square constrains nothing
    if (predictions[s].size() != layout.joint_dim())
      throw ConfigError("build_constraint_set: estimate size mismatch");
    const double half_width = constraint.safety_margin + constraint.lipschitz_L * radii[s];
    for (int j = 0; j < layout.num_agents; ++j) {
      const Point2 center = agent_block(predictions[s], layout, j);
      set.boxes[j] = set.boxes[j].intersect(UnsafeBox::square(center, half_width));
    }
    set.provenance.push_back(static_cast<int>(s));
  }

  if (set.provenance.empty())
    throw CalibrationInfeasibleError(
        "build_constraint_set: every region radius is infinite; nothing is certifiable", 0);
  return set;
}

double signed_clearance(const ConstraintSet& set, const Point2& p) {
  double clearance = kInf;
  for (const UnsafeBox& box : set.boxes)
    if (!box.empty()) clearance = std::min(clearance, box.signed_distance(p));
  return clearance;
}

nlohmann::json constraint_set_to_json(const ConstraintSet& set) {
  nlohmann::json records = nlohmann::json::array();
  for (std::size_t j = 0; j < set.boxes.size(); ++j) {
    const UnsafeBox& box = set.boxes[j];
    nlohmann::json r;
    r["t"] = set.t;
    r["tau"] = set.tau;
    r["agent"] = static_cast<int>(j);
    if (box.empty())
      r["box"] = "empty";
    else
      r["box"] = {box.xlo, box.xhi, box.ylo, box.yhi};
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace cpmpc
