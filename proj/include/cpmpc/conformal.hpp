#pragma once

#include <json.hpp>
#include <optional>
#include <vector>

#include "cpmpc/norms.hpp"
#include "cpmpc/pair_table.hpp"
#include "cpmpc/predictor.hpp"
#include "cpmpc/trajectory.hpp"

namespace cpmpc {

/// Per-pair scale factors sigma_{tau|t}: the maximum training-set prediction
/// error at each (t, tau), floored at a small positive constant so the
/// normalized scores are always well defined.
using NormalizationTable = PairTable<double>;

/// One conformity score per calibration trajectory: the maximum over all
/// (t, tau) pairs of the normalized prediction error.
using ConformityScores = std::vector<double>;

constexpr double kDefaultSigmaFloor = 1e-9;

enum class RegionMethod { joint, benchmark };

/// Calibrated region radii for every pair (t, tau). The joint method scales
/// one quantile R of the normalized-max scores by sigma_{tau|t}; the
/// benchmark calibrates each pair separately at level 1 - delta/T.
/// Radii may be +infinity when the calibration set is too small for the
/// requested confidence; infinite radii certify nothing downstream.
struct RegionTable {
  RegionMethod method = RegionMethod::joint;
  double delta = 0.1;
  std::optional<double> quantile;          // R (joint method only); may be +inf
  PairTable<double> radii;                 // C_{tau|t}
  std::optional<NormalizationTable> sigma; // scales used by the joint method

  int horizon() const { return radii.horizon(); }
  bool all_finite() const;
};

/// sigma_{tau|t} = max over training trajectories of ||Y_tau - Yhat_{tau|t}||,
/// floored at sigma_floor.
NormalizationTable compute_normalization(const std::vector<const Trajectory*>& train,
                                         const std::vector<PredictionTable>& tables, Norm norm,
                                         double sigma_floor = kDefaultSigmaFloor);

/// R^{(i)} = max over all (t, tau) of ||Y_tau^{(i)} - Yhat_{tau|t}^{(i)}|| / sigma_{tau|t}.
ConformityScores compute_scores(const std::vector<const Trajectory*>& calib,
                                const std::vector<PredictionTable>& tables,
                                const NormalizationTable& sigma, Norm norm);

struct QuantileIndex {
  long k = 0;           // rank into the augmented score set, 1-based
  bool finite = false;  // false when k exceeds the calibration size, so the
                        // k-th smallest of scores + {inf} is infinite
};

/// k = ceil((n_calib + 1) * (1 - delta)). The augmented set appends one
/// infinite score, so the result is finite exactly when k <= n_calib.
QuantileIndex quantile_index(long n_calib, double delta);

/// Joint calibration: R is the k-th smallest of the augmented score set and
/// every radius is C_{tau|t} = R * sigma_{tau|t}.
RegionTable calibrate_joint(const ConformityScores& scores, const NormalizationTable& sigma,
                            double delta);

/// How the benchmark allocates its failure budget across real time steps.
/// Only the uniform split (delta / T per step) is implemented.
enum class BenchmarkDeltaSplit { uniform };

BenchmarkDeltaSplit benchmark_delta_split_from_string(const std::string& s);

/// Benchmark calibration: a separate conformity score per pair (t, tau),
/// each pair calibrated at level 1 - delta/T.
RegionTable calibrate_benchmark(const std::vector<const Trajectory*>& calib,
                                const std::vector<PredictionTable>& tables, double delta,
                                Norm norm,
                                BenchmarkDeltaSplit split = BenchmarkDeltaSplit::uniform);

struct PairMargin {
  int t = 0;
  int tau = 0;
  double error = 0.0;
  double radius = 0.0;
  double slack = 0.0;  // radius - error; negative on violation
};

struct MembershipReport {
  bool inside = true;
  std::vector<PairMargin> violations;  // pairs with error > radius
  PairMargin worst;                    // pair with least slack
};

/// True iff the trajectory lies inside every region of the table, i.e.
/// ||Y_tau - Yhat_{tau|t}|| <= C_{tau|t} for all pairs.
MembershipReport check_membership(const RegionTable& region, const PredictionTable& table,
                                  const Trajectory& truth, Norm norm);

/// JSON serialization; +infinity radii are encoded as the string "inf".
nlohmann::json region_table_to_json(const RegionTable& table);
RegionTable region_table_from_json(const nlohmann::json& j);

}  // namespace cpmpc
