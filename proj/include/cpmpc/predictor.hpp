#pragma once

#include <Eigen/Core>
#include <json.hpp>
#include <string>
#include <vector>

#include "cpmpc/pair_table.hpp"
#include "cpmpc/trajectory.hpp"

namespace cpmpc {

/// One-step predictive model g : R^{Np} -> R^{Np}. Multi-step estimates come
/// from recursive rollout of g.
enum class PredictorKind { constant_velocity, linear_affine };

struct OneStepModel {
  PredictorKind kind = PredictorKind::linear_affine;
  // linear_affine: g(y) = A*y + b. Unused for constant_velocity, which
  // advances by the velocity implied by the last two observed states.
  Eigen::MatrixXd A;
  Eigen::VectorXd b;

  int joint_dim() const { return static_cast<int>(b.size()); }
  void validate() const;
};

PredictorKind predictor_kind_from_string(const std::string& s);
std::string to_string(PredictorKind kind);

/// Least-squares fit of the affine one-step map over all consecutive state
/// pairs of the training trajectories, with ridge penalty on A (not on b).
/// ridge = 0 on degenerate data raises NumericalError suggesting a positive
/// ridge.
OneStepModel fit_linear_one_step(const std::vector<const Trajectory*>& train, double ridge);
OneStepModel fit_linear_one_step(const std::vector<Trajectory>& train, double ridge);

/// Estimates of Y_{t+1}..Y_T formed at time t from the observation Y_t
/// (plus Y_{t-1} for the constant-velocity model; pass nullptr at t = 0 to
/// fall back to zero velocity). Element k of the result is the estimate of
/// Y_{t+1+k}.
std::vector<JointState> predict_from(const OneStepModel& model, const JointState& observed,
                                     const JointState* predecessor, int t, int horizon);

/// Estimates for every pair (t, tau), 0 <= t < tau <= T, of one trajectory.
class PredictionTable {
 public:
  PredictionTable() = default;
  PredictionTable(int horizon, int joint_dim);

  int horizon() const { return entries_.horizon(); }
  int joint_dim() const { return joint_dim_; }

  void set(int t, int tau, JointState estimate);
  const JointState& at(int t, int tau) const;

  bool complete() const;

 private:
  PairTable<JointState> entries_;
  int joint_dim_ = 0;
};

/// Fills the whole table by predicting from each observation Y_t of the
/// trajectory in turn. Only Y_t (and Y_{t-1} for constant-velocity) is ever
/// consumed at time t; future truth never leaks into the estimates.
PredictionTable build_prediction_table(const OneStepModel& model, const Trajectory& traj);

nlohmann::json model_to_json(const OneStepModel& model);
OneStepModel model_from_json(const nlohmann::json& j);

}  // namespace cpmpc
