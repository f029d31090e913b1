#include "cpmpc/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace cpmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_double(double v) {
  if (v == kInf) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Rejects keys outside the allowed set; the config format is closed.
void expect_keys(const nlohmann::json& j, const std::string& where,
                 std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        known = true;
        break;
      }
    if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

Point2 point_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(where + " must be [x, y]");
  return Point2(j[0].get<double>(), j[1].get<double>());
}

}  // namespace

void AgentGenConfig::validate() const {
  if (agents.empty()) throw ConfigError("agent generator needs at least one agent");
  if (horizon < 1) throw ConfigError("agent horizon must be >= 1");
  if (!(nominal_speed >= 0.0) || !(noise_std >= 0.0))
    throw ConfigError("agent speed and noise must be >= 0");
  if (!(position_clip > 0.0)) throw ConfigError("position clip must be positive");
  for (const AgentSpec& a : agents) {
    if (!a.start_mean.allFinite() || !a.goal.allFinite() || !(a.start_std >= 0.0))
      throw ConfigError("agent spec not finite");
  }
}

Trajectory generate_agents(const AgentGenConfig& cfg, RngSeed seed) {
  cfg.validate();
  const AgentLayout layout = cfg.layout();
  Eigen::MatrixXd states(cfg.horizon + 1, layout.joint_dim());
  Rng rng(seed);

  std::vector<Point2> pos(cfg.agents.size());
  for (std::size_t j = 0; j < cfg.agents.size(); ++j) {
    const AgentSpec& a = cfg.agents[j];
    pos[j] = a.start_mean + a.start_std * Point2(rng.normal(), rng.normal());
    states(0, 2 * j) = pos[j].x();
    states(0, 2 * j + 1) = pos[j].y();
  }
  for (int t = 1; t <= cfg.horizon; ++t) {
    for (std::size_t j = 0; j < cfg.agents.size(); ++j) {
      const Point2 to_goal = cfg.agents[j].goal - pos[j];
      const double dist = to_goal.norm();
      Point2 step = dist > cfg.nominal_speed ? Point2(cfg.nominal_speed / dist * to_goal)
                                             : to_goal;  // arrive instead of overshooting
      step += cfg.noise_std * Point2(rng.normal(), rng.normal());
      pos[j] += step;
      pos[j].x() = std::clamp(pos[j].x(), -cfg.position_clip, cfg.position_clip);
      pos[j].y() = std::clamp(pos[j].y(), -cfg.position_clip, cfg.position_clip);
      states(t, 2 * j) = pos[j].x();
      states(t, 2 * j + 1) = pos[j].y();
    }
  }
  return Trajectory(layout, std::move(states));
}

CollisionConstraint ExperimentConfig::collision() const {
  CollisionConstraint c;
  c.safety_margin = safety_margin;
  c.lipschitz_L = 1.0;
  c.norm = norm;
  return c;
}

void ExperimentConfig::validate() const {
  if (n_train < 1 || n_calib < 1 || n_test < 1)
    throw ConfigError("dataset sizes must each be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (!(ridge >= 0.0)) throw ConfigError("ridge must be >= 0");
  if (!(safety_margin >= 0.0)) throw ConfigError("safety_margin must be >= 0");
  if (episodes < 0) throw ConfigError("episodes must be >= 0");
  if (episodes > 0 && norm != Norm::infinity)
    throw ConfigError("closed-loop geometry requires the infinity norm");
  agent_gen.validate();
  mission.validate();
  bicycle.validate();
  input_bounds.validate();
  solver.validate();
  if (agent_gen.horizon != mission.horizon)
    throw ConfigError("agent horizon must equal the mission horizon");
  for (const auto& [t, tau] : capture_pairs)
    if (t < 0 || tau <= t || tau > mission.horizon)
      throw ConfigError("capture pair outside 0 <= t < tau <= T");
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  expect_keys(j, "config",
              {"n_train", "n_calib", "n_test", "delta", "norm", "predictor",
               "benchmark_delta_split", "safety_margin", "episodes", "data_seed", "episode_seed",
               "agents", "mission", "bicycle", "input_bounds", "solver", "capture_pairs"});
  ExperimentConfig cfg;
  cfg.n_train = j.value("n_train", cfg.n_train);
  cfg.n_calib = j.value("n_calib", cfg.n_calib);
  cfg.n_test = j.value("n_test", cfg.n_test);
  cfg.delta = j.value("delta", cfg.delta);
  if (j.contains("norm")) cfg.norm = norm_from_string(j.at("norm").get<std::string>());
  if (j.contains("predictor")) {
    const auto& p = j.at("predictor");
    expect_keys(p, "predictor", {"kind", "ridge"});
    if (p.contains("kind")) cfg.predictor_kind = predictor_kind_from_string(p.at("kind"));
    cfg.ridge = p.value("ridge", cfg.ridge);
  }
  if (j.contains("benchmark_delta_split"))
    cfg.benchmark_delta_split =
        benchmark_delta_split_from_string(j.at("benchmark_delta_split").get<std::string>());
  cfg.safety_margin = j.value("safety_margin", cfg.safety_margin);
  cfg.episodes = j.value("episodes", cfg.episodes);
  cfg.data_seed.value = j.value("data_seed", cfg.data_seed.value);
  cfg.episode_seed.value = j.value("episode_seed", cfg.episode_seed.value);

  if (j.contains("mission")) {
    expect_keys(j.at("mission"), "mission",
                {"horizon", "initial", "target", "terminal_tolerance", "position_weight"});
    cfg.mission = mission_from_json(j.at("mission"));
  }
  if (j.contains("bicycle")) {
    const auto& b = j.at("bicycle");
    expect_keys(b, "bicycle", {"length", "delta"});
    cfg.bicycle.length = b.value("length", cfg.bicycle.length);
    cfg.bicycle.delta = b.value("delta", cfg.bicycle.delta);
  }
  if (j.contains("input_bounds")) {
    const auto& b = j.at("input_bounds");
    expect_keys(b, "input_bounds", {"phi", "a"});
    if (b.contains("phi")) {
      cfg.input_bounds.phi_lo = b.at("phi").at(0).get<double>();
      cfg.input_bounds.phi_hi = b.at("phi").at(1).get<double>();
    }
    if (b.contains("a")) {
      cfg.input_bounds.a_lo = b.at("a").at(0).get<double>();
      cfg.input_bounds.a_hi = b.at("a").at(1).get<double>();
    }
  }
  if (j.contains("agents")) {
    const auto& a = j.at("agents");
    expect_keys(a, "agents", {"nominal_speed", "noise_std", "position_clip", "list"});
    cfg.agent_gen.nominal_speed = a.value("nominal_speed", cfg.agent_gen.nominal_speed);
    cfg.agent_gen.noise_std = a.value("noise_std", cfg.agent_gen.noise_std);
    cfg.agent_gen.position_clip = a.value("position_clip", cfg.agent_gen.position_clip);
    if (a.contains("list")) {
      for (const auto& entry : a.at("list")) {
        expect_keys(entry, "agents.list entry", {"start_mean", "start_std", "goal"});
        AgentSpec spec;
        spec.start_mean = point_from_json(entry.at("start_mean"), "start_mean");
        spec.start_std = entry.value("start_std", 0.0);
        spec.goal = point_from_json(entry.at("goal"), "goal");
        cfg.agent_gen.agents.push_back(spec);
      }
    }
  }
  cfg.agent_gen.horizon = cfg.mission.horizon;
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    expect_keys(s, "solver",
                {"feas_tol", "penalty_initial", "penalty_growth", "penalty_max",
                 "max_inner_iterations", "random_restarts", "restart_scale", "fd_step",
                 "armijo_c"});
    cfg.solver.feas_tol = s.value("feas_tol", cfg.solver.feas_tol);
    cfg.solver.penalty_initial = s.value("penalty_initial", cfg.solver.penalty_initial);
    cfg.solver.penalty_growth = s.value("penalty_growth", cfg.solver.penalty_growth);
    cfg.solver.penalty_max = s.value("penalty_max", cfg.solver.penalty_max);
    cfg.solver.max_inner_iterations =
        s.value("max_inner_iterations", cfg.solver.max_inner_iterations);
    cfg.solver.random_restarts = s.value("random_restarts", cfg.solver.random_restarts);
    cfg.solver.restart_scale = s.value("restart_scale", cfg.solver.restart_scale);
    cfg.solver.fd_step = s.value("fd_step", cfg.solver.fd_step);
    cfg.solver.armijo_c = s.value("armijo_c", cfg.solver.armijo_c);
  }
  if (j.contains("capture_pairs")) {
    for (const auto& p : j.at("capture_pairs")) {
      if (!p.is_array() || p.size() != 2) throw ConfigError("capture_pairs entries must be [t, tau]");
      cfg.capture_pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
    }
  }
  cfg.validate();
  return cfg;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["n_train"] = cfg.n_train;
  j["n_calib"] = cfg.n_calib;
  j["n_test"] = cfg.n_test;
  j["delta"] = cfg.delta;
  j["norm"] = to_string(cfg.norm);
  j["predictor"] = {{"kind", to_string(cfg.predictor_kind)}, {"ridge", cfg.ridge}};
  j["benchmark_delta_split"] = "uniform";
  j["safety_margin"] = cfg.safety_margin;
  j["episodes"] = cfg.episodes;
  j["data_seed"] = cfg.data_seed.value;
  j["episode_seed"] = cfg.episode_seed.value;
  j["mission"] = mission_to_json(cfg.mission);
  j["bicycle"] = {{"length", cfg.bicycle.length}, {"delta", cfg.bicycle.delta}};
  j["input_bounds"] = {{"phi", {cfg.input_bounds.phi_lo, cfg.input_bounds.phi_hi}},
                       {"a", {cfg.input_bounds.a_lo, cfg.input_bounds.a_hi}}};
  nlohmann::json agents;
  agents["nominal_speed"] = cfg.agent_gen.nominal_speed;
  agents["noise_std"] = cfg.agent_gen.noise_std;
  agents["position_clip"] = cfg.agent_gen.position_clip;
  agents["list"] = nlohmann::json::array();
  for (const AgentSpec& a : cfg.agent_gen.agents)
    agents["list"].push_back({{"start_mean", {a.start_mean.x(), a.start_mean.y()}},
                              {"start_std", a.start_std},
                              {"goal", {a.goal.x(), a.goal.y()}}});
  j["agents"] = std::move(agents);
  j["solver"] = {{"feas_tol", cfg.solver.feas_tol},
                 {"penalty_initial", cfg.solver.penalty_initial},
                 {"penalty_growth", cfg.solver.penalty_growth},
                 {"penalty_max", cfg.solver.penalty_max},
                 {"max_inner_iterations", cfg.solver.max_inner_iterations},
                 {"random_restarts", cfg.solver.random_restarts},
                 {"restart_scale", cfg.solver.restart_scale},
                 {"fd_step", cfg.solver.fd_step},
                 {"armijo_c", cfg.solver.armijo_c}};
  j["capture_pairs"] = nlohmann::json::array();
  for (const auto& [t, tau] : cfg.capture_pairs) j["capture_pairs"].push_back({t, tau});
  return j;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

void parallel_for(long n, const std::function<void(long)>& fn) {
  if (n <= 0) return;
  unsigned workers = std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  workers = static_cast<unsigned>(std::min<long>(workers, n));
  if (workers <= 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (long i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

MetricsReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  MetricsReport report;
  report.config = cfg;

  // Dataset: one i.i.d. draw per trajectory, assigned to splits in order.
  const long total = static_cast<long>(cfg.n_train) + cfg.n_calib + cfg.n_test;
  std::vector<Trajectory> trajectories;
  trajectories.reserve(total);
  for (long i = 0; i < total; ++i)
    trajectories.push_back(
        generate_agents(cfg.agent_gen, RngSeed{derive_seed(cfg.data_seed.value, i)}));
  DatasetSplit split;
  for (long i = 0; i < total; ++i) {
    if (i < cfg.n_train)
      split.train.push_back(static_cast<int>(i));
    else if (i < cfg.n_train + cfg.n_calib)
      split.calib.push_back(static_cast<int>(i));
    else
      split.test.push_back(static_cast<int>(i));
  }
  Dataset dataset(std::move(trajectories), std::move(split));

  // Predictor.
  if (cfg.predictor_kind == PredictorKind::linear_affine) {
    report.model = fit_linear_one_step(dataset.train_set(), cfg.ridge);
  } else {
    report.model.kind = PredictorKind::constant_velocity;
    report.model.A = Eigen::MatrixXd::Zero(cfg.agent_gen.layout().joint_dim(),
                                           cfg.agent_gen.layout().joint_dim());
    report.model.b = Eigen::VectorXd::Zero(cfg.agent_gen.layout().joint_dim());
  }

  const auto tables_for = [&](const std::vector<const Trajectory*>& set) {
    std::vector<PredictionTable> tables(set.size());
    parallel_for(static_cast<long>(set.size()),
                 [&](long i) { tables[i] = build_prediction_table(report.model, *set[i]); });
    return tables;
  };
  const std::vector<const Trajectory*> train = dataset.train_set();
  const std::vector<const Trajectory*> calib = dataset.calib_set();
  const std::vector<const Trajectory*> test = dataset.test_set();
  const std::vector<PredictionTable> train_tables = tables_for(train);
  const std::vector<PredictionTable> calib_tables = tables_for(calib);
  const std::vector<PredictionTable> test_tables = tables_for(test);

  // Calibration, both methods.
  const NormalizationTable sigma = compute_normalization(train, train_tables, cfg.norm);
  const ConformityScores scores = compute_scores(calib, calib_tables, sigma, cfg.norm);
  report.joint_regions = calibrate_joint(scores, sigma, cfg.delta);
  report.benchmark_regions =
      calibrate_benchmark(calib, calib_tables, cfg.delta, cfg.norm, cfg.benchmark_delta_split);
  if (!report.joint_regions.all_finite() || !report.benchmark_regions.all_finite()) {
    const long need_joint = min_calibration_size(cfg.delta);
    const long need_bench = min_calibration_size(cfg.delta / cfg.mission.horizon);
    throw CalibrationInfeasibleError(
        "calibration produced infinite radii with " + std::to_string(cfg.n_calib) +
            " trajectories; the joint method needs >= " + std::to_string(need_joint) +
            " and the benchmark needs >= " + std::to_string(need_bench),
        std::max(need_joint, need_bench));
  }

  // Empirical coverage on the held-out test set.
  report.joint_inside.assign(test.size(), false);
  report.benchmark_inside.assign(test.size(), false);
  parallel_for(static_cast<long>(test.size()), [&](long i) {
    report.joint_inside[i] =
        check_membership(report.joint_regions, test_tables[i], *test[i], cfg.norm).inside;
    report.benchmark_inside[i] =
        check_membership(report.benchmark_regions, test_tables[i], *test[i], cfg.norm).inside;
  });
  report.joint_coverage.total = report.benchmark_coverage.total = static_cast<long>(test.size());
  for (bool in : report.joint_inside) report.joint_coverage.inside += in;
  for (bool in : report.benchmark_inside) report.benchmark_coverage.inside += in;

  // Paired closed-loop episodes: same agents for both controllers.
  report.episodes = cfg.episodes;
  if (cfg.episodes > 0) {
    ClosedLoopSetup proposed;
    proposed.controller = ControllerKind::proposed;
    proposed.mission = cfg.mission;
    proposed.params = cfg.bicycle;
    proposed.input_bounds = cfg.input_bounds;
    proposed.constraint = cfg.collision();
    proposed.predictor = report.model;
    proposed.regions = report.joint_regions;
    proposed.solver = cfg.solver;
    ClosedLoopSetup benchmark = proposed;
    benchmark.controller = ControllerKind::benchmark;
    benchmark.regions = report.benchmark_regions;

    report.episode_logs.resize(2 * static_cast<std::size_t>(cfg.episodes));
    parallel_for(cfg.episodes, [&](long e) {
      const Trajectory agents =
          generate_agents(cfg.agent_gen, RngSeed{derive_seed(cfg.episode_seed.value, e)});
      const RngSeed solver_seed{derive_seed(cfg.episode_seed.value, 1000000007ULL + e)};
      ClosedLoopSetup p = proposed;
      ClosedLoopSetup b = benchmark;
      if (e == 0) {
        p.capture_pairs = cfg.capture_pairs;
        b.capture_pairs = cfg.capture_pairs;
      }
      report.episode_logs[2 * e] = run_closed_loop(p, agents, solver_seed);
      report.episode_logs[2 * e + 1] = run_closed_loop(b, agents, solver_seed);
    });

    double proposed_cost = 0.0, benchmark_cost = 0.0;
    for (long e = 0; e < cfg.episodes; ++e) {
      for (int which = 0; which < 2; ++which) {
        const EpisodeLog& log = report.episode_logs[2 * e + which];
        ControllerStats& stats = which == 0 ? report.proposed : report.benchmark;
        const bool t0 = !log.steps.empty() && log.steps.front().feasible;
        stats.t0_feasible += t0;
        stats.always_feasible += !log.ever_infeasible;
        stats.recursively_feasible += t0 && !log.ever_infeasible;
        stats.safe += log.safe;
        (which == 0 ? proposed_cost : benchmark_cost) += log.realized_cost;
        if (log.ever_infeasible)
          report.infeasibility_events.push_back(
              InfeasibilityEvent{to_string(log.controller), log.seed, log.first_infeasible_step});
        if (which == 0) {
          report.monotonicity_violations += log.monotonicity_violations;
          report.warm_start_failures += log.warm_start_failures;
        }
      }
    }
    report.proposed.mean_cost = proposed_cost / cfg.episodes;
    report.benchmark.mean_cost = benchmark_cost / cfg.episodes;
  }
  return report;
}

namespace {

nlohmann::json controller_stats_to_json(const ControllerStats& s) {
  return {{"t0_feasible", s.t0_feasible},
          {"always_feasible", s.always_feasible},
          {"recursively_feasible", s.recursively_feasible},
          {"safe", s.safe},
          {"mean_cost", s.mean_cost}};
}

nlohmann::json coverage_to_json(const CoverageStat& c) {
  return {{"inside", c.inside}, {"total", c.total}, {"fraction", c.fraction()}};
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed while writing " + path.string());
}

}  // namespace

void export_report(const MetricsReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  nlohmann::json summary;
  summary["delta"] = report.config.delta;
  summary["episodes"] = report.episodes;
  summary["quantile_R"] = report.joint_regions.quantile && *report.joint_regions.quantile < kInf
                              ? nlohmann::json(*report.joint_regions.quantile)
                              : nlohmann::json("inf");
  summary["coverage"] = {{"joint", coverage_to_json(report.joint_coverage)},
                         {"benchmark", coverage_to_json(report.benchmark_coverage)}};
  summary["proposed"] = controller_stats_to_json(report.proposed);
  summary["benchmark"] = controller_stats_to_json(report.benchmark);
  summary["checks"] = {{"monotonicity_violations", report.monotonicity_violations},
                       {"warm_start_failures", report.warm_start_failures}};
  summary["infeasibility_events"] = nlohmann::json::array();
  for (const InfeasibilityEvent& ev : report.infeasibility_events)
    summary["infeasibility_events"].push_back(
        {{"method", ev.method}, {"seed", ev.seed}, {"step", ev.step}});
  summary["config"] = experiment_config_to_json(report.config);
  write_file(out_dir / "report.json", summary.dump(2) + "\n");

  std::ostringstream radii;
  radii << "method,t,tau,radius\n";
  const auto dump_radii = [&](const char* name, const RegionTable& table) {
    table.radii.for_each([&](int t, int tau, double r) {
      radii << name << ',' << t << ',' << tau << ',' << format_double(r) << '\n';
    });
  };
  dump_radii("joint", report.joint_regions);
  dump_radii("benchmark", report.benchmark_regions);
  write_file(out_dir / "radii.csv", radii.str());

  std::ostringstream coverage;
  coverage << "test_index,joint_inside,benchmark_inside\n";
  for (std::size_t i = 0; i < report.joint_inside.size(); ++i)
    coverage << i << ',' << (report.joint_inside[i] ? 1 : 0) << ','
             << (report.benchmark_inside[i] ? 1 : 0) << '\n';
  write_file(out_dir / "coverage.csv", coverage.str());

  std::ostringstream episodes;
  std::ostringstream boxes;
  for (std::size_t idx = 0; idx < report.episode_logs.size(); ++idx) {
    const EpisodeLog& log = report.episode_logs[idx];
    const long episode = static_cast<long>(idx) / 2;
    const std::string controller = to_string(log.controller);
    for (const StepRecord& record : log.steps) {
      nlohmann::json line = step_record_to_json(record);
      line["episode"] = episode;
      line["controller"] = controller;
      episodes << line.dump() << '\n';
    }
    nlohmann::json summary_line;
    summary_line["episode"] = episode;
    summary_line["controller"] = controller;
    summary_line["summary"] = {{"seed", log.seed},
                               {"terminal_error", log.terminal_error},
                               {"terminal_realized_c", log.terminal_realized_c},
                               {"realized_cost", log.realized_cost},
                               {"safe", log.safe},
                               {"ever_infeasible", log.ever_infeasible},
                               {"first_infeasible_step", log.first_infeasible_step},
                               {"monotonicity_violations", log.monotonicity_violations},
                               {"warm_start_failures", log.warm_start_failures}};
    episodes << summary_line.dump() << '\n';

    for (const ConstraintSet& set : log.captured_sets) {
      for (nlohmann::json record : constraint_set_to_json(set)) {
        record["controller"] = controller;
        boxes << record.dump() << '\n';
      }
    }
  }
  write_file(out_dir / "episodes.jsonl", episodes.str());
  write_file(out_dir / "boxes.jsonl", boxes.str());
}

nlohmann::json recompute_report(const std::filesystem::path& out_dir) {
  // Coverage counts from coverage.csv.
  std::ifstream cov(out_dir / "coverage.csv");
  if (!cov) throw IoError("cannot open " + (out_dir / "coverage.csv").string());
  std::string line;
  std::getline(cov, line);
  if (line != "test_index,joint_inside,benchmark_inside")
    throw IoError("unexpected coverage.csv header: " + line);
  CoverageStat joint, benchmark;
  while (std::getline(cov, line)) {
    if (line.empty()) continue;
    long index = 0;
    int joint_in = 0, bench_in = 0;
    if (std::sscanf(line.c_str(), "%ld,%d,%d", &index, &joint_in, &bench_in) != 3)
      throw IoError("bad coverage.csv row: " + line);
    ++joint.total;
    ++benchmark.total;
    joint.inside += joint_in != 0;
    benchmark.inside += bench_in != 0;
  }

  // Closed-loop aggregates from episodes.jsonl.
  std::ifstream eps(out_dir / "episodes.jsonl");
  if (!eps) throw IoError("cannot open " + (out_dir / "episodes.jsonl").string());
  struct EpisodeAccum {
    bool t0_feasible = false;
    bool any_infeasible = false;
    bool steps_safe = true;  // realized_c >= 0 for all logged t >= 1
    bool have_summary = false;
    bool summary_safe = false;
    double terminal_realized_c = 0.0;
    double realized_cost = 0.0;
  };
  std::map<std::pair<long, std::string>, EpisodeAccum> accum;
  while (std::getline(eps, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    const std::pair<long, std::string> key{j.at("episode").get<long>(),
                                           j.at("controller").get<std::string>()};
    EpisodeAccum& a = accum[key];
    if (j.contains("summary")) {
      const auto& s = j.at("summary");
      a.have_summary = true;
      a.summary_safe = s.at("safe").get<bool>();
      a.terminal_realized_c = s.at("terminal_realized_c").get<double>();
      a.realized_cost = s.at("realized_cost").get<double>();
      continue;
    }
    const int t = j.at("t").get<int>();
    const bool feasible = j.at("feasible").get<bool>();
    if (t == 0) a.t0_feasible = feasible;
    if (!feasible) a.any_infeasible = true;
    if (t >= 1 && j.at("realized_c").is_number() && j.at("realized_c").get<double>() < 0.0)
      a.steps_safe = false;
  }

  ControllerStats proposed, benchmark_stats;
  double proposed_cost = 0.0, benchmark_cost = 0.0;
  long proposed_n = 0, benchmark_n = 0;
  for (const auto& [key, a] : accum) {
    if (!a.have_summary) throw IoError("episode without summary line in episodes.jsonl");
    ControllerStats& stats = key.second == "proposed" ? proposed : benchmark_stats;
    const bool safe = a.steps_safe && a.terminal_realized_c >= 0.0;
    if (safe != a.summary_safe) throw IoError("episode summary disagrees with its step records");
    stats.t0_feasible += a.t0_feasible;
    stats.always_feasible += !a.any_infeasible;
    stats.recursively_feasible += a.t0_feasible && !a.any_infeasible;
    stats.safe += safe;
    if (key.second == "proposed") {
      proposed_cost += a.realized_cost;
      ++proposed_n;
    } else {
      benchmark_cost += a.realized_cost;
      ++benchmark_n;
    }
  }
  if (proposed_n > 0) proposed.mean_cost = proposed_cost / proposed_n;
  if (benchmark_n > 0) benchmark_stats.mean_cost = benchmark_cost / benchmark_n;

  nlohmann::json j;
  j["episodes"] = proposed_n;
  j["coverage"] = {{"joint", coverage_to_json(joint)},
                   {"benchmark", coverage_to_json(benchmark)}};
  j["proposed"] = controller_stats_to_json(proposed);
  j["benchmark"] = controller_stats_to_json(benchmark_stats);
  return j;
}

}  // namespace cpmpc
