#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "cpmpc/dataset_io.hpp"
#include "cpmpc/sim.hpp"

namespace {

using namespace cpmpc;

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + " is not valid JSON: " + e.what());
  }
  return j;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Dataset build_dataset(const ExperimentConfig& cfg) {
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
  return Dataset(std::move(trajectories), std::move(split));
}

std::vector<PredictionTable> tables_for(const OneStepModel& model,
                                        const std::vector<const Trajectory*>& set) {
  std::vector<PredictionTable> tables(set.size());
  parallel_for(static_cast<long>(set.size()),
               [&](long i) { tables[i] = build_prediction_table(model, *set[i]); });
  return tables;
}

RegionTable calibrate_regions(const ExperimentConfig& cfg, const Dataset& dataset,
                              const OneStepModel& model, const std::string& method) {
  const std::vector<const Trajectory*> calib = dataset.calib_set();
  const std::vector<PredictionTable> calib_tables = tables_for(model, calib);
  if (method == "joint") {
    const std::vector<const Trajectory*> train = dataset.train_set();
    const NormalizationTable sigma =
        compute_normalization(train, tables_for(model, train), cfg.norm);
    return calibrate_joint(compute_scores(calib, calib_tables, sigma, cfg.norm), sigma,
                           cfg.delta);
  }
  if (method == "benchmark")
    return calibrate_benchmark(calib, calib_tables, cfg.delta, cfg.norm,
                               cfg.benchmark_delta_split);
  throw ConfigError("unknown calibration method '" + method + "'");
}

void print_episode(std::ostream& out, const EpisodeLog& log) {
  for (const StepRecord& record : log.steps) out << step_record_to_json(record).dump() << '\n';
  nlohmann::json summary;
  summary["summary"] = {{"seed", log.seed},
                        {"controller", to_string(log.controller)},
                        {"terminal_error", log.terminal_error},
                        {"terminal_realized_c", log.terminal_realized_c},
                        {"realized_cost", log.realized_cost},
                        {"safe", log.safe},
                        {"ever_infeasible", log.ever_infeasible},
                        {"first_infeasible_step", log.first_infeasible_step},
                        {"monotonicity_violations", log.monotonicity_violations},
                        {"warm_start_failures", log.warm_start_failures}};
  out << summary.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shrinking-horizon MPC with conformal-prediction safety regions"};
  app.require_subcommand(1);

  std::string config_path, data_dir, model_path, regions_path, out_path, method = "joint";
  std::string controller = "proposed";
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("generate-data", "Draw the dataset and write it to a directory");
  gen->add_option("--config", config_path, "experiment config JSON")->required();
  gen->add_option("--out", out_path, "output directory")->required();

  auto* fit = app.add_subcommand("fit-predictor", "Fit the one-step model on the training split");
  fit->add_option("--config", config_path, "experiment config JSON")->required();
  fit->add_option("--data", data_dir, "dataset directory")->required();
  fit->add_option("--out", model_path, "model JSON output")->required();

  auto* cal = app.add_subcommand("calibrate", "Calibrate region radii on the calibration split");
  cal->add_option("--config", config_path, "experiment config JSON")->required();
  cal->add_option("--data", data_dir, "dataset directory")->required();
  cal->add_option("--model", model_path, "fitted model JSON")->required();
  cal->add_option("--method", method, "joint or benchmark")->required();
  cal->add_option("--out", regions_path, "region table JSON output")->required();

  auto* cov = app.add_subcommand("coverage", "Evaluate empirical coverage on the test split");
  cov->add_option("--config", config_path, "experiment config JSON")->required();
  cov->add_option("--data", data_dir, "dataset directory")->required();
  cov->add_option("--model", model_path, "fitted model JSON")->required();
  cov->add_option("--regions", regions_path, "region table JSON")->required();

  auto* run = app.add_subcommand("run", "Run one closed-loop episode");
  run->add_option("--config", config_path, "experiment config JSON")->required();
  run->add_option("--model", model_path, "fitted model JSON")->required();
  run->add_option("--regions", regions_path, "region table JSON")->required();
  run->add_option("--controller", controller, "proposed or benchmark");
  run->add_option("--seed", seed, "episode seed")->required();
  run->add_option("--out", out_path, "episode JSONL output (default stdout)");

  auto* exp = app.add_subcommand("experiment", "Full pipeline from one config");
  exp->add_option("--config", config_path, "experiment config JSON")->required();
  exp->add_option("--out", out_path, "report output directory")->required();

  auto* rep = app.add_subcommand("report", "Recompute aggregates from exported episode logs");
  rep->add_option("--dir", out_path, "experiment output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const ExperimentConfig cfg = load_experiment_config(config_path);
      save_dataset(build_dataset(cfg), out_path);
      std::cout << "wrote dataset to " << out_path << '\n';
    } else if (fit->parsed()) {
      const ExperimentConfig cfg = load_experiment_config(config_path);
      const Dataset dataset = load_dataset(data_dir);
      OneStepModel model;
      if (cfg.predictor_kind == PredictorKind::linear_affine) {
        model = fit_linear_one_step(dataset.train_set(), cfg.ridge);
      } else {
        const int dim = dataset.trajectory(0).layout().joint_dim();
        model.kind = PredictorKind::constant_velocity;
        model.A = Eigen::MatrixXd::Zero(dim, dim);
        model.b = Eigen::VectorXd::Zero(dim);
      }
      write_json(model_path, model_to_json(model));
      std::cout << "wrote model to " << model_path << '\n';
    } else if (cal->parsed()) {
      const ExperimentConfig cfg = load_experiment_config(config_path);
      const Dataset dataset = load_dataset(data_dir);
      const OneStepModel model = model_from_json(read_json(model_path));
      const RegionTable table = calibrate_regions(cfg, dataset, model, method);
      write_json(regions_path, region_table_to_json(table));
      std::cout << "wrote " << method << " regions to " << regions_path << '\n';
    } else if (cov->parsed()) {
      const ExperimentConfig cfg = load_experiment_config(config_path);
      const Dataset dataset = load_dataset(data_dir);
      const OneStepModel model = model_from_json(read_json(model_path));
      const RegionTable table = region_table_from_json(read_json(regions_path));
      const std::vector<const Trajectory*> test = dataset.test_set();
      const std::vector<PredictionTable> tables = tables_for(model, test);
      std::vector<char> inside(test.size(), 0);
      parallel_for(static_cast<long>(test.size()), [&](long i) {
        inside[i] = check_membership(table, tables[i], *test[i], cfg.norm).inside;
      });
      const long count = std::count(inside.begin(), inside.end(), 1);
      nlohmann::json j{{"inside", count},
                       {"total", static_cast<long>(test.size())},
                       {"fraction", test.empty() ? 0.0 : double(count) / test.size()}};
      std::cout << j.dump(2) << '\n';
    } else if (run->parsed()) {
      const ExperimentConfig cfg = load_experiment_config(config_path);
      ClosedLoopSetup setup;
      setup.controller = controller_from_string(controller);
      setup.mission = cfg.mission;
      setup.params = cfg.bicycle;
      setup.input_bounds = cfg.input_bounds;
      setup.constraint = cfg.collision();
      setup.predictor = model_from_json(read_json(model_path));
      setup.regions = region_table_from_json(read_json(regions_path));
      setup.solver = cfg.solver;
      setup.capture_pairs = cfg.capture_pairs;
      const Trajectory agents =
          generate_agents(cfg.agent_gen, RngSeed{derive_seed(cfg.episode_seed.value, seed)});
      const EpisodeLog log = run_closed_loop(
          setup, agents, RngSeed{derive_seed(cfg.episode_seed.value, 1000000007ULL + seed)});
      if (out_path.empty()) {
        print_episode(std::cout, log);
      } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw IoError("cannot write " + out_path);
        print_episode(out, log);
      }
      if (!log.steps.empty() && !log.steps.front().feasible) {
        std::cerr << "MPC infeasible at t=0\n";
        return 4;
      }
    } else if (exp->parsed()) {
      const ExperimentConfig cfg = load_experiment_config(config_path);
      const MetricsReport report = run_experiment(cfg);
      export_report(report, out_path);
      std::cout << "coverage joint " << report.joint_coverage.inside << '/'
                << report.joint_coverage.total << ", benchmark "
                << report.benchmark_coverage.inside << '/' << report.benchmark_coverage.total
                << '\n'
                << "episodes " << report.episodes << ": proposed safe " << report.proposed.safe
                << ", benchmark safe " << report.benchmark.safe << '\n'
                << "wrote report to " << out_path << '\n';
    } else if (rep->parsed()) {
      std::cout << recompute_report(out_path).dump(2) << '\n';
    }
  } catch (const CalibrationInfeasibleError& e) {
    std::cerr << "calibration infeasible: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
