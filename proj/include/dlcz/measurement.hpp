#pragma once

#include <cmath>

namespace dlcz {

/// A value with a one-standard-deviation uncertainty.
struct Measurement {
  double value = 0.0;
  double sigma = 0.0;

  /// Number of standard deviations separating value from `reference`.
  [[nodiscard]] double deviations_from(double reference) const {
    return sigma > 0.0 ? std::abs(value - reference) / sigma : (value == reference ? 0.0 : INFINITY);
  }
};

}  // namespace dlcz
