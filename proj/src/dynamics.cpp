#include "cpmpc/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace cpmpc {

bool BicycleState::all_finite() const {
  return std::isfinite(px) && std::isfinite(py) && std::isfinite(theta) && std::isfinite(v);
}

BicycleInput InputBounds::clamp(const BicycleInput& u) const {
  return BicycleInput{std::clamp(u.phi, phi_lo, phi_hi), std::clamp(u.a, a_lo, a_hi)};
}

double InputBounds::violation(const BicycleInput& u) const {
  const double phi_v = std::max(phi_lo - u.phi, u.phi - phi_hi);
  const double a_v = std::max(a_lo - u.a, u.a - a_hi);
  return std::max(phi_v, a_v);
}

void InputBounds::validate() const {
  if (!(phi_lo <= phi_hi) || !(a_lo <= a_hi)) throw ConfigError("empty input box");
}

double StateBox::violation(const BicycleState& x) const {
  const Eigen::Vector4d v = x.to_vector();
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) worst = std::max({worst, lo[i] - v[i], v[i] - hi[i]});
  return worst;
}

void MissionSpec::validate() const {
  if (horizon < 1) throw ConfigError("mission horizon must be >= 1");
  if (!initial.all_finite() || !target.allFinite()) throw ConfigError("mission endpoints not finite");
  if (!(terminal_tolerance >= 0.0)) throw ConfigError("terminal tolerance must be >= 0");
  if (!(position_weight > 0.0)) throw ConfigError("position weight must be positive");
  if (!state_bounds.empty() && static_cast<int>(state_bounds.size()) != horizon + 1)
    throw ConfigError("state_bounds must be empty or have horizon + 1 entries");
}

BicycleState bicycle_step(const BicycleState& x, const BicycleInput& u,
                          const BicycleParams& params) {
  BicycleState next;
  next.px = x.px + params.delta * x.v * std::cos(x.theta);
  next.py = x.py + params.delta * x.v * std::sin(x.theta);
  next.theta = x.theta + params.delta * (x.v / params.length) * std::tan(u.phi);
  next.v = x.v + params.delta * u.a;
  return next;
}

std::vector<BicycleState> rollout(const BicycleState& x0, const std::vector<BicycleInput>& inputs,
                                  const BicycleParams& params) {
  std::vector<BicycleState> states;
  states.reserve(inputs.size() + 1);
  states.push_back(x0);
  for (const BicycleInput& u : inputs) states.push_back(bicycle_step(states.back(), u, params));
  return states;
}

double evaluate_cost(const std::vector<BicycleState>& states,
                     const std::vector<BicycleInput>& inputs, const MissionSpec& spec) {
  if (states.size() != inputs.size() + 1)
    throw ConfigError("evaluate_cost: need exactly one more state than inputs");
  double cost = 0.0;
  for (const BicycleState& x : states)
    cost += spec.position_weight * (x.position() - spec.target).squaredNorm();
  return cost;
}

nlohmann::json mission_to_json(const MissionSpec& spec) {
  nlohmann::json j;
  j["horizon"] = spec.horizon;
  j["initial"] = {spec.initial.px, spec.initial.py, spec.initial.theta, spec.initial.v};
  j["target"] = {spec.target.x(), spec.target.y()};
  j["terminal_tolerance"] = spec.terminal_tolerance;
  j["position_weight"] = spec.position_weight;
  return j;
}

MissionSpec mission_from_json(const nlohmann::json& j) {
  MissionSpec spec;
  spec.horizon = j.at("horizon").get<int>();
  const auto x0 = j.at("initial");
  if (x0.size() != 4) throw IoError("mission initial state needs 4 components");
  spec.initial = BicycleState{x0[0].get<double>(), x0[1].get<double>(), x0[2].get<double>(),
                              x0[3].get<double>()};
  const auto tgt = j.at("target");
  if (tgt.size() != 2) throw IoError("mission target needs 2 components");
  spec.target = Point2(tgt[0].get<double>(), tgt[1].get<double>());
  spec.terminal_tolerance = j.at("terminal_tolerance").get<double>();
  if (j.contains("position_weight")) spec.position_weight = j.at("position_weight").get<double>();
  spec.validate();
  return spec;
}

}  // namespace cpmpc
