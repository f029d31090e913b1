#pragma once

#include <stdexcept>
#include <string>

namespace cpmpc {

/// Invalid configuration or violated call contract.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure (singular system, non-finite intermediate value).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// A predictor produced a non-finite estimate.
class PredictionError : public std::runtime_error {
 public:
  PredictionError(const std::string& what, int tau) : std::runtime_error(what), tau_(tau) {}
  int tau() const { return tau_; }

 private:
  int tau_;
};

/// Raised when every available region radius is infinite, so no constraint
/// can be certified. Carries the minimum calibration size that would have
/// produced finite radii.
class CalibrationInfeasibleError : public std::runtime_error {
 public:
  CalibrationInfeasibleError(const std::string& what, long required_calib_size)
      : std::runtime_error(what), required_calib_size_(required_calib_size) {}
  long required_calib_size() const { return required_calib_size_; }

 private:
  long required_calib_size_;
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cpmpc
