#include "cpmpc/dataset_io.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace cpmpc {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);

  if (dataset.size() == 0) throw IoError("cannot save an empty dataset");
  const auto& first = dataset.trajectory(0);
  const auto report = validate_dataset(dataset);
  if (!report.passed())
    throw IoError("dataset fails validation; refusing to save (" +
                  report.issues.front().message + ")");

  nlohmann::json meta;
  meta["horizon"] = first.horizon();
  meta["num_agents"] = first.layout().num_agents;
  meta["agent_dim"] = first.layout().agent_dim;
  meta["num_trajectories"] = dataset.size();
  meta["split"] = {{"train", dataset.split().train},
                   {"calib", dataset.split().calib},
                   {"test", dataset.split().test}};
  meta["trajectories_csv"] = "trajectories.csv";

  {
    std::ofstream out(dir / "dataset.json");
    if (!out) throw IoError("cannot write " + (dir / "dataset.json").string());
    out << meta.dump(2) << "\n";
  }

  std::ofstream csv(dir / "trajectories.csv");
  if (!csv) throw IoError("cannot write " + (dir / "trajectories.csv").string());
  const int p = first.layout().agent_dim;
  csv << "traj_id,t,agent_id";
  for (int d = 1; d <= p; ++d) csv << ",y_" << d;
  csv << "\n";
  for (int i = 0; i < static_cast<int>(dataset.size()); ++i) {
    const auto& traj = dataset.trajectory(i);
    for (int t = 0; t <= traj.horizon(); ++t) {
      for (int j = 0; j < traj.layout().num_agents; ++j) {
        csv << i << "," << t << "," << j;
        const auto a = traj.agent(t, j);
        for (int d = 0; d < p; ++d) csv << "," << format_double(a[d]);
        csv << "\n";
      }
    }
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::filesystem::path dir = path;
  std::filesystem::path meta_path = path;
  if (std::filesystem::is_directory(path)) {
    meta_path = path / "dataset.json";
  } else {
    dir = path.parent_path();
  }

  std::ifstream in(meta_path);
  if (!in) throw IoError("cannot open " + meta_path.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed dataset.json: " + std::string(e.what()));
  }

  const int T = meta.at("horizon").get<int>();
  AgentLayout layout{meta.at("num_agents").get<int>(), meta.at("agent_dim").get<int>()};
  const auto K = meta.at("num_trajectories").get<std::size_t>();
  const std::string csv_name = meta.value("trajectories_csv", "trajectories.csv");

  std::vector<Eigen::MatrixXd> states(K, Eigen::MatrixXd::Constant(
                                             T + 1, layout.joint_dim(),
                                             std::numeric_limits<double>::quiet_NaN()));

  std::ifstream csv(dir / csv_name);
  if (!csv) throw IoError("cannot open " + (dir / csv_name).string());
  std::string line;
  std::getline(csv, line);  // header
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    auto next = [&]() -> std::string {
      if (!std::getline(row, cell, ',')) throw IoError("short row in trajectories.csv: " + line);
      return cell;
    };
    const int id = std::stoi(next());
    const int t = std::stoi(next());
    const int agent = std::stoi(next());
    if (id < 0 || id >= static_cast<int>(K) || t < 0 || t > T || agent < 0 ||
        agent >= layout.num_agents)
      throw IoError("row indices out of range in trajectories.csv: " + line);
    for (int d = 0; d < layout.agent_dim; ++d)
      states[id](t, agent * layout.agent_dim + d) = std::stod(next());
  }

  std::vector<Trajectory> trajectories;
  trajectories.reserve(K);
  for (auto& m : states) trajectories.emplace_back(layout, std::move(m));

  DatasetSplit split;
  split.train = meta.at("split").at("train").get<std::vector<int>>();
  split.calib = meta.at("split").at("calib").get<std::vector<int>>();
  split.test = meta.at("split").at("test").get<std::vector<int>>();
  return Dataset(std::move(trajectories), std::move(split));
}

}  // namespace cpmpc
