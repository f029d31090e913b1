#pragma once

#include <filesystem>

#include "cpmpc/trajectory.hpp"

namespace cpmpc {

/// Writes `dataset.json` (metadata + split) and `trajectories.csv`
/// (rows traj_id, t, agent_id, y_1..y_p, full precision) into dir.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Loads a dataset written by save_dataset. `path` may be the directory or
/// the dataset.json file itself.
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace cpmpc
