#include "cpmpc/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cpmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_matching(const std::vector<const Trajectory*>& trajs,
                      const std::vector<PredictionTable>& tables, const char* who) {
  if (trajs.empty()) throw ConfigError(std::string(who) + ": empty trajectory list");
  if (trajs.size() != tables.size())
    throw ConfigError(std::string(who) + ": trajectory and table counts differ");
  const int T = trajs.front()->horizon();
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (trajs[i]->horizon() != T || tables[i].horizon() != T)
      throw ConfigError(std::string(who) + ": inconsistent horizons");
    if (!tables[i].complete())
      throw ConfigError(std::string(who) + ": prediction table " + std::to_string(i) +
                        " is incomplete");
  }
}

/// k-th smallest of scores augmented with one +inf, duplicates counted with
/// multiplicity (stable ascending sort).
double augmented_order_statistic(ConformityScores scores, const QuantileIndex& idx) {
  if (!idx.finite) return kInf;
  std::stable_sort(scores.begin(), scores.end());
  return scores[static_cast<std::size_t>(idx.k - 1)];
}

}  // namespace

bool RegionTable::all_finite() const {
  bool finite = true;
  radii.for_each([&](int, int, double r) {
    if (!(r < kInf)) finite = false;
  });
  return finite;
}

NormalizationTable compute_normalization(const std::vector<const Trajectory*>& train,
                                         const std::vector<PredictionTable>& tables, Norm norm,
                                         double sigma_floor) {
  require_matching(train, tables, "compute_normalization");
  if (!(sigma_floor > 0.0)) throw ConfigError("sigma_floor must be positive");

  NormalizationTable sigma(train.front()->horizon(), 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const Trajectory& traj = *train[i];
    sigma.for_each([&](int t, int tau, double& value) {
      const double err = vector_norm(traj.state(tau) - tables[i].at(t, tau), norm);
      value = std::max(value, err);
    });
  }
  sigma.for_each([&](int, int, double& value) { value = std::max(value, sigma_floor); });
  return sigma;
}

ConformityScores compute_scores(const std::vector<const Trajectory*>& calib,
                                const std::vector<PredictionTable>& tables,
                                const NormalizationTable& sigma, Norm norm) {
  require_matching(calib, tables, "compute_scores");
  if (sigma.horizon() != calib.front()->horizon())
    throw ConfigError("compute_scores: normalization horizon mismatch");

  ConformityScores scores;
  scores.reserve(calib.size());
  for (std::size_t i = 0; i < calib.size(); ++i) {
    const Trajectory& traj = *calib[i];
    double worst = 0.0;
    sigma.for_each([&](int t, int tau, double s) {
      const double err = vector_norm(traj.state(tau) - tables[i].at(t, tau), norm);
      worst = std::max(worst, err / s);
    });
    scores.push_back(worst);
  }
  return scores;
}

QuantileIndex quantile_index(long n_calib, double delta) {
  if (n_calib < 1) throw ConfigError("quantile_index needs n_calib >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  QuantileIndex idx;
  idx.k = static_cast<long>(std::ceil(static_cast<double>(n_calib + 1) * (1.0 - delta)));
  idx.finite = idx.k <= n_calib;
  return idx;
}

RegionTable calibrate_joint(const ConformityScores& scores, const NormalizationTable& sigma,
                            double delta) {
  if (scores.empty()) throw ConfigError("calibrate_joint needs a nonempty score list");

  const QuantileIndex idx = quantile_index(static_cast<long>(scores.size()), delta);
  const double r = augmented_order_statistic(scores, idx);

  RegionTable table;
  table.method = RegionMethod::joint;
  table.delta = delta;
  table.quantile = r;
  table.sigma = sigma;
  table.radii = NormalizationTable(sigma.horizon(), 0.0);
  table.radii.for_each([&](int t, int tau, double& c) { c = r * sigma.at(t, tau); });
  return table;
}

BenchmarkDeltaSplit benchmark_delta_split_from_string(const std::string& s) {
  if (s == "uniform") return BenchmarkDeltaSplit::uniform;
  throw ConfigError("unknown benchmark_delta_split '" + s + "' (only 'uniform' is supported)");
}

RegionTable calibrate_benchmark(const std::vector<const Trajectory*>& calib,
                                const std::vector<PredictionTable>& tables, double delta,
                                Norm norm, BenchmarkDeltaSplit) {
  require_matching(calib, tables, "calibrate_benchmark");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");

  const int T = calib.front()->horizon();
  // Uniform split of the failure budget over the T real time steps.
  const double delta_bar = delta / static_cast<double>(T);
  const QuantileIndex idx = quantile_index(static_cast<long>(calib.size()), delta_bar);

  RegionTable table;
  table.method = RegionMethod::benchmark;
  table.delta = delta;
  table.radii = NormalizationTable(T, 0.0);

  ConformityScores pair_scores(calib.size());
  table.radii.for_each([&](int t, int tau, double& c) {
    for (std::size_t i = 0; i < calib.size(); ++i)
      pair_scores[i] = vector_norm(calib[i]->state(tau) - tables[i].at(t, tau), norm);
    c = augmented_order_statistic(pair_scores, idx);
  });
  return table;
}

MembershipReport check_membership(const RegionTable& region, const PredictionTable& table,
                                  const Trajectory& truth, Norm norm) {
  if (region.horizon() != truth.horizon() || table.horizon() != truth.horizon())
    throw ConfigError("check_membership: horizon mismatch");

  MembershipReport report;
  bool first = true;
  region.radii.for_each([&](int t, int tau, double radius) {
    const double err = vector_norm(truth.state(tau) - table.at(t, tau), norm);
    const PairMargin margin{t, tau, err, radius, radius - err};
    if (first || margin.slack < report.worst.slack) {
      report.worst = margin;
      first = false;
    }
    if (err > radius) {
      report.inside = false;
      report.violations.push_back(margin);
    }
  });
  return report;
}

nlohmann::json region_table_to_json(const RegionTable& table) {
  auto encode = [](double v) -> nlohmann::json {
    if (v == kInf) return "inf";
    return v;
  };

  nlohmann::json j;
  j["method"] = table.method == RegionMethod::joint ? "joint" : "benchmark";
  j["delta"] = table.delta;
  j["horizon"] = table.horizon();
  j["R"] = table.quantile ? encode(*table.quantile) : nlohmann::json(nullptr);
  auto& entries = j["entries"] = nlohmann::json::array();
  table.radii.for_each([&](int t, int tau, double radius) {
    nlohmann::json e;
    e["t"] = t;
    e["tau"] = tau;
    e["sigma"] = table.sigma ? nlohmann::json(table.sigma->at(t, tau)) : nlohmann::json(nullptr);
    e["radius"] = encode(radius);
    entries.push_back(std::move(e));
  });
  return j;
}

RegionTable region_table_from_json(const nlohmann::json& j) {
  auto decode = [](const nlohmann::json& v) -> double {
    if (v.is_string()) {
      if (v.get<std::string>() == "inf") return kInf;
      throw IoError("unexpected string value in region table: " + v.dump());
    }
    return v.get<double>();
  };

  RegionTable table;
  const std::string method = j.at("method").get<std::string>();
  if (method == "joint")
    table.method = RegionMethod::joint;
  else if (method == "benchmark")
    table.method = RegionMethod::benchmark;
  else
    throw IoError("unknown region method '" + method + "'");

  table.delta = j.at("delta").get<double>();
  const int T = j.at("horizon").get<int>();
  table.radii = NormalizationTable(T, 0.0);
  if (!j.at("R").is_null()) table.quantile = decode(j.at("R"));

  bool any_sigma = false;
  NormalizationTable sigma(T, 0.0);
  for (const auto& e : j.at("entries")) {
    const int t = e.at("t").get<int>();
    const int tau = e.at("tau").get<int>();
    table.radii.at(t, tau) = decode(e.at("radius"));
    if (!e.at("sigma").is_null()) {
      sigma.at(t, tau) = e.at("sigma").get<double>();
      any_sigma = true;
    }
  }
  if (any_sigma) table.sigma = std::move(sigma);
  return table;
}

}  // namespace cpmpc
