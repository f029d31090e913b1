#include "cpmpc/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cpmpc {

Trajectory::Trajectory(AgentLayout layout, Eigen::MatrixXd states)
    : layout_(layout), states_(std::move(states)) {
  layout_.validate();
  if (states_.rows() < 2)
    throw ConfigError("trajectory needs at least two time steps (T >= 1)");
  if (states_.cols() != layout_.joint_dim())
    throw ConfigError("trajectory state width " + std::to_string(states_.cols()) +
                      " does not match layout joint dimension " +
                      std::to_string(layout_.joint_dim()));
}

JointState Trajectory::state(int t) const {
  if (t < 0 || t > horizon()) throw ConfigError("trajectory time index out of range");
  return states_.row(t).transpose();
}

Eigen::VectorXd Trajectory::agent(int t, int j) const {
  if (j < 0 || j >= layout_.num_agents) throw ConfigError("agent index out of range");
  return states_.row(t).segment(static_cast<Eigen::Index>(j) * layout_.agent_dim,
                                layout_.agent_dim);
}

Dataset::Dataset(std::vector<Trajectory> trajectories, DatasetSplit split)
    : trajectories_(std::move(trajectories)), split_(std::move(split)) {
  // splits must partition 0..K-1
  std::vector<int> seen(trajectories_.size(), 0);
  auto mark = [&](const std::vector<int>& idx) {
    for (int i : idx) {
      if (i < 0 || i >= static_cast<int>(trajectories_.size()))
        throw ConfigError("split index " + std::to_string(i) + " out of range");
      ++seen[i];
    }
  };
  mark(split_.train);
  mark(split_.calib);
  mark(split_.test);
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i] != 1)
      throw ConfigError("split is not a partition: index " + std::to_string(i) + " appears " +
                        std::to_string(seen[i]) + " times");
  }
}

std::vector<const Trajectory*> Dataset::select(const std::vector<int>& idx) const {
  std::vector<const Trajectory*> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(&trajectories_[i]);
  return out;
}

Dataset split_dataset(std::vector<Trajectory> trajectories, int n_train, int n_calib, int n_test,
                      RngSeed seed) {
  const auto total = static_cast<long>(trajectories.size());
  if (n_train < 1 || n_calib < 1 || n_test < 0)
    throw ConfigError("split sizes must satisfy n_train >= 1, n_calib >= 1, n_test >= 0");
  if (static_cast<long>(n_train) + n_calib + n_test != total)
    throw ConfigError("split sizes " + std::to_string(n_train) + "+" + std::to_string(n_calib) +
                      "+" + std::to_string(n_test) + " do not sum to " + std::to_string(total) +
                      " trajectories");

  std::vector<int> order(trajectories.size());
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates with an explicit bounded draw, so the partition is
  // reproducible independent of the standard library's shuffle.
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }

  DatasetSplit split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.calib.assign(order.begin() + n_train, order.begin() + n_train + n_calib);
  split.test.assign(order.begin() + n_train + n_calib, order.end());
  return Dataset(std::move(trajectories), std::move(split));
}

ValidationReport validate_dataset(const Dataset& dataset) {
  ValidationReport report;
  if (dataset.size() == 0) return report;

  const auto& first = dataset.trajectory(0);
  const int T = first.horizon();
  const AgentLayout layout = first.layout();

  for (int i = 0; i < static_cast<int>(dataset.size()); ++i) {
    const auto& traj = dataset.trajectory(i);
    if (traj.horizon() != T) {
      report.issues.push_back(
          {i, -1, -1,
           "horizon " + std::to_string(traj.horizon()) + " differs from dataset horizon " +
               std::to_string(T)});
    }
    if (!(traj.layout() == layout)) {
      report.issues.push_back({i, -1, -1, "agent layout differs from dataset layout"});
    }
    if (!traj.all_finite()) {
      const auto& m = traj.states();
      for (int t = 0; t <= traj.horizon(); ++t) {
        for (int j = 0; j < traj.layout().num_agents; ++j) {
          for (int d = 0; d < traj.layout().agent_dim; ++d) {
            if (!std::isfinite(m(t, j * traj.layout().agent_dim + d))) {
              report.issues.push_back({i, t, j, "non-finite coordinate"});
            }
          }
        }
      }
    }
  }
  return report;
}

}  // namespace cpmpc
