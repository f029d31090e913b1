#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "cpmpc/errors.hpp"
#include "cpmpc/rng.hpp"

namespace cpmpc {

/// Shape of the joint agent state: N agents, each with a p-dimensional state.
/// The joint state stacks the per-agent states into one vector of length N*p.
struct AgentLayout {
  int num_agents = 0;  // N
  int agent_dim = 2;   // p

  int joint_dim() const { return num_agents * agent_dim; }

  void validate() const {
    if (num_agents < 0 || agent_dim < 1) throw ConfigError("invalid agent layout");
  }

  bool operator==(const AgentLayout&) const = default;
};

/// Stacked joint agent state at one time step, length N*p.
using JointState = Eigen::VectorXd;

/// View of agent j's block inside a stacked joint state.
inline Eigen::Ref<const Eigen::VectorXd> agent_block(const JointState& joint,
                                                     const AgentLayout& layout, int j) {
  return joint.segment(static_cast<Eigen::Index>(j) * layout.agent_dim, layout.agent_dim);
}

/// Joint agent states over a full mission, indices t = 0..T.
class Trajectory {
 public:
  /// states: (T+1) x (N*p), row t holds the stacked joint state at time t.
  Trajectory(AgentLayout layout, Eigen::MatrixXd states);

  int horizon() const { return static_cast<int>(states_.rows()) - 1; }  // T
  const AgentLayout& layout() const { return layout_; }
  const Eigen::MatrixXd& states() const { return states_; }

  JointState state(int t) const;
  Eigen::VectorXd agent(int t, int j) const;

  bool all_finite() const { return states_.allFinite(); }

 private:
  AgentLayout layout_;
  Eigen::MatrixXd states_;
};

/// Disjoint, exhaustive partition of trajectory indices.
struct DatasetSplit {
  std::vector<int> train;
  std::vector<int> calib;
  std::vector<int> test;
};

/// Trajectories plus their train/calibration/test assignment.
class Dataset {
 public:
  Dataset(std::vector<Trajectory> trajectories, DatasetSplit split);

  std::size_t size() const { return trajectories_.size(); }
  const Trajectory& trajectory(int i) const { return trajectories_.at(i); }
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  const DatasetSplit& split() const { return split_; }

  std::vector<const Trajectory*> train_set() const { return select(split_.train); }
  std::vector<const Trajectory*> calib_set() const { return select(split_.calib); }
  std::vector<const Trajectory*> test_set() const { return select(split_.test); }

 private:
  std::vector<const Trajectory*> select(const std::vector<int>& idx) const;

  std::vector<Trajectory> trajectories_;
  DatasetSplit split_;
};

/// Deterministically shuffles the trajectories and assigns the first n_train
/// to train, the next n_calib to calibration, the rest to test.
/// n_test may be zero when the test set is held separately.
Dataset split_dataset(std::vector<Trajectory> trajectories, int n_train, int n_calib, int n_test,
                      RngSeed seed);

struct ValidationIssue {
  int trajectory = -1;
  int t = -1;      // -1 when the issue is not tied to a time step
  int agent = -1;  // -1 when the issue is not tied to an agent
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool passed() const { return issues.empty(); }
};

/// Report-only check that every trajectory shares the dataset's T/N/p and
/// contains only finite values.
ValidationReport validate_dataset(const Dataset& dataset);

}  // namespace cpmpc
