#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "cpmpc/conformal.hpp"
#include "cpmpc/dynamics.hpp"
#include "cpmpc/mpc.hpp"
#include "cpmpc/predictor.hpp"
#include "cpmpc/trajectory.hpp"

namespace cpmpc {

/// One synthetic agent: a noisy start position and a fixed goal it walks
/// toward. Goals are placed far enough away that agents keep walking for the
/// whole mission, which keeps the population close to linear drift.
struct AgentSpec {
  Point2 start_mean{0.0, 0.0};
  double start_std = 0.0;
  Point2 goal{0.0, 0.0};
};

/// Distribution of joint agent trajectories. Draws with distinct seeds are
/// i.i.d.; generation never looks at the robot, so the distribution is the
/// same offline and online.
struct AgentGenConfig {
  std::vector<AgentSpec> agents;
  double nominal_speed = 0.25;    // meters per step
  double noise_std = 0.05;        // per-step velocity noise, meters
  int horizon = 20;               // T
  double position_clip = 1000.0;  // keeps coordinates finite

  AgentLayout layout() const { return AgentLayout{static_cast<int>(agents.size()), 2}; }
  void validate() const;
};

/// One i.i.d. draw of a joint agent trajectory over t = 0..T.
Trajectory generate_agents(const AgentGenConfig& cfg, RngSeed seed);

/// The full pipeline configuration; one JSON file drives everything.
struct ExperimentConfig {
  int n_train = 2000;
  int n_calib = 610;
  int n_test = 1000;
  double delta = 0.1;
  Norm norm = Norm::infinity;
  PredictorKind predictor_kind = PredictorKind::linear_affine;
  double ridge = 1e-6;
  BenchmarkDeltaSplit benchmark_delta_split = BenchmarkDeltaSplit::uniform;
  double safety_margin = 0.6;  // agent radius + vehicle length
  int episodes = 500;
  RngSeed data_seed{1};
  RngSeed episode_seed{2};
  AgentGenConfig agent_gen;
  MissionSpec mission;
  BicycleParams bicycle;
  InputBounds input_bounds;
  SolverConfig solver;
  /// (t, tau) constraint-set snapshots exported from the first episode.
  std::vector<std::pair<int, int>> capture_pairs;

  CollisionConstraint collision() const;
  void validate() const;
};

/// Strict parse: unknown keys anywhere in the document are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct CoverageStat {
  long inside = 0;
  long total = 0;
  double fraction() const { return total > 0 ? static_cast<double>(inside) / total : 0.0; }
};

struct InfeasibilityEvent {
  std::string method;
  std::uint64_t seed = 0;
  int step = -1;
};

/// Per-method closed-loop aggregates over the paired episodes.
struct ControllerStats {
  long t0_feasible = 0;
  long always_feasible = 0;     // feasible at every step
  long recursively_feasible = 0;  // feasible at t=0 and never lost afterwards
  long safe = 0;                // c(x_t, Y_t) >= 0 for all t = 1..T
  double mean_cost = 0.0;       // mean realized cost across episodes
};

struct MetricsReport {
  ExperimentConfig config;
  OneStepModel model;
  RegionTable joint_regions;
  RegionTable benchmark_regions;
  CoverageStat joint_coverage;
  CoverageStat benchmark_coverage;
  std::vector<bool> joint_inside;      // per test trajectory
  std::vector<bool> benchmark_inside;  // per test trajectory
  long episodes = 0;
  ControllerStats proposed;
  ControllerStats benchmark;
  long monotonicity_violations = 0;
  long warm_start_failures = 0;
  std::vector<InfeasibilityEvent> infeasibility_events;
  std::vector<EpisodeLog> episode_logs;  // proposed and benchmark, paired order
};

/// Dataset generation through paired closed-loop episodes, in one call.
MetricsReport run_experiment(const ExperimentConfig& cfg);

/// Writes report.json, radii.csv, coverage.csv, episodes.jsonl, boxes.jsonl.
void export_report(const MetricsReport& report, const std::filesystem::path& out_dir);

/// Recomputes the aggregate counts of report.json from the exported
/// episodes.jsonl / coverage.csv and returns the summary document.
nlohmann::json recompute_report(const std::filesystem::path& out_dir);

/// Runs fn(0..n-1), possibly across a small worker pool; every index writes
/// only its own results, so the outcome is identical in any schedule.
void parallel_for(long n, const std::function<void(long)>& fn);

}  // namespace cpmpc
