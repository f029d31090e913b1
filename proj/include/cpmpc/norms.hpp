#pragma once

#include <Eigen/Core>
#include <string>

#include "cpmpc/errors.hpp"

namespace cpmpc {

/// Norm applied to joint agent states. The conformal regions, the constraint
/// tightening, and the MPC geometry all share one instance, wired from a
/// single configuration key.
enum class Norm { infinity, euclidean };

inline double vector_norm(const Eigen::Ref<const Eigen::VectorXd>& v, Norm norm) {
  return norm == Norm::infinity ? v.lpNorm<Eigen::Infinity>() : v.norm();
}

inline Norm norm_from_string(const std::string& s) {
  if (s == "infinity") return Norm::infinity;
  if (s == "euclidean") return Norm::euclidean;
  throw ConfigError("unknown norm '" + s + "' (expected 'infinity' or 'euclidean')");
}

inline std::string to_string(Norm norm) {
  return norm == Norm::infinity ? "infinity" : "euclidean";
}

}  // namespace cpmpc
