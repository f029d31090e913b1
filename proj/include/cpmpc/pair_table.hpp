#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cpmpc/errors.hpp"

namespace cpmpc {

/// Triangular table indexed by time pairs (t, tau) with 0 <= t < tau <= T.
/// Holds one entry for every such pair, T*(T+1)/2 in total.
template <typename T>
class PairTable {
 public:
  PairTable() = default;

  explicit PairTable(int horizon, const T& init = T{})
      : horizon_(horizon),
        values_(static_cast<std::size_t>(horizon) * (horizon + 1) / 2, init) {
    if (horizon < 1) throw ConfigError("PairTable horizon must be >= 1");
  }

  int horizon() const { return horizon_; }
  std::size_t size() const { return values_.size(); }

  T& at(int t, int tau) { return values_[index_of(t, tau)]; }
  const T& at(int t, int tau) const { return values_[index_of(t, tau)]; }

  /// Visits every pair in (t, tau) order: f(t, tau, value).
  template <typename F>
  void for_each(F&& f) const {
    for (int t = 0; t < horizon_; ++t)
      for (int tau = t + 1; tau <= horizon_; ++tau) f(t, tau, at(t, tau));
  }

  template <typename F>
  void for_each(F&& f) {
    for (int t = 0; t < horizon_; ++t)
      for (int tau = t + 1; tau <= horizon_; ++tau) f(t, tau, at(t, tau));
  }

 private:
  std::size_t index_of(int t, int tau) const {
    if (t < 0 || tau <= t || tau > horizon_)
      throw ConfigError("PairTable index (" + std::to_string(t) + ", " + std::to_string(tau) +
                        ") outside 0 <= t < tau <= " + std::to_string(horizon_));
    // pairs ordered by t, then tau
    const std::size_t offset =
        static_cast<std::size_t>(t) * horizon_ - static_cast<std::size_t>(t) * (t - 1) / 2;
    return offset + static_cast<std::size_t>(tau - t - 1);
  }

  int horizon_ = 0;
  std::vector<T> values_;
};

}  // namespace cpmpc
