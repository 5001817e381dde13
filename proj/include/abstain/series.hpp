#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace abstain {

/// One time series: an observed past of length T and, when realized values
/// are available (training, calibration, evaluation), a future of length H.
struct SeriesWindow {
  std::string id;
  std::vector<double> past;
  std::optional<std::vector<double>> future;

  int past_length() const { return static_cast<int>(past.size()); }
  int future_length() const { return future ? static_cast<int>(future->size()) : 0; }
};

/// Per-series multi-horizon predictions: point forecasts and conditional
/// variance estimates for steps 1..H. Under squared-error loss the variance
/// estimate doubles as the plug-in per-step conditional risk.
struct ForecastBundle {
  std::string id;
  std::vector<double> means;
  std::vector<double> variances;

  int horizon() const { return static_cast<int>(means.size()); }
};

inline void validate_bundle(const ForecastBundle& b) {
  if (b.means.size() != b.variances.size())
    throw std::invalid_argument("ForecastBundle '" + b.id + "': means/variances length mismatch");
  if (b.means.empty()) throw std::invalid_argument("ForecastBundle '" + b.id + "': empty horizon");
  for (double v : b.variances)
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument("ForecastBundle '" + b.id + "': non-positive variance");
}

}  // namespace abstain
