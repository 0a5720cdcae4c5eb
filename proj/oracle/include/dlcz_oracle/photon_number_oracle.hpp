#pragma once

#include <cstddef>
#include <vector>

// Exact click statistics of independent thermal pair modes, computed by
// brute-force enumeration of truncated photon-number distributions. Shares no
// code with the simulator.
namespace dlcz_oracle {

struct PairMode {
  double mean_pairs = 0.0;       ///< thermal mean photon number per mode
  double stokes_detect = 1.0;    ///< per-photon Stokes detection probability
  double antistokes_detect = 1.0;///< per-photon anti-Stokes detection probability
};

struct ClickStatistics {
  double p_s = 0.0;     ///< P(at least one Stokes click)
  double p_as = 0.0;
  double p_sas = 0.0;   ///< P(Stokes and anti-Stokes clicks in the same trial)
  double p_s_d0 = 0.0;  ///< with a 50/50 splitter: single-detector click probabilities
  double p_s_d1 = 0.0;
  double p_s_d0d1 = 0.0;
  double p_as_d0 = 0.0;
  double p_as_d1 = 0.0;
  double p_as_d0d1 = 0.0;
  double truncated_mass = 0.0;  ///< photon-number probability dropped by the cutoff

  [[nodiscard]] double g2_cross() const { return p_sas / (p_s * p_as); }
  [[nodiscard]] double g2_ss() const { return p_s_d0d1 / (p_s_d0 * p_s_d1); }
  [[nodiscard]] double g2_asas() const { return p_as_d0d1 / (p_as_d0 * p_as_d1); }
  /// Accidental-subtracted coincidence probability per Stokes click.
  [[nodiscard]] double eta_RO() const { return (p_sas - p_s * p_as) / p_s; }
};

/// Thermal distribution p^n / (1 + p)^(n + 1) for n = 0..n_max.
[[nodiscard]] std::vector<double> thermal_distribution(double mean, std::size_t n_max);

/// At most 2 modes; each mode emits n pairs, every photon is detected
/// independently. A channel clicks if any photon reaches it.
[[nodiscard]] ClickStatistics click_statistics(const std::vector<PairMode>& modes,
                                               std::size_t n_max = 20);

}  // namespace dlcz_oracle
