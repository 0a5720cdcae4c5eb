#pragma once

#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dlcz {

/// Multiplicative factors of the expected read-out efficiency. The spin
/// decoherence factor is not stored here; it depends on the storage time of
/// each heralded excitation.
struct EfficiencyBudget {
  double eta_RP = 0.40;   ///< read-pulse transfer efficiency
  double eta_reph = 0.36; ///< AFC rephasing efficiency
  double beta_BR = 0.60;  ///< hyperfine branching ratio of the Stokes emission
  double beta_G = 0.76;   ///< fraction of the coincidence peak inside the analysis window
};

/// Comb parameters: peak optical depth, finesse, background absorption.
struct AFCParams {
  double d = 5.4;
  double F = 4.4;
  double d0 = 0.4;
  std::optional<double> eta_AFC_measured = 0.17;
};

/// Photon-number statistics of the Stokes/anti-Stokes source.
enum class SourceModel {
  ThermalPairs,       ///< two-mode squeezed vacuum: thermal marginals, perfectly number-correlated
  IndependentPoisson, ///< classical substitute: independent Poisson emission on both channels
};

/// Photon-number statistics of the uncorrelated background on both channels.
enum class NoiseStatistics { Thermal, Poisson };

struct ExperimentConfig {
  double write_power_uW = 16.0;
  double stokes_prob_per_uW = 6.25e-4;
  double afc_delay_us = 8.0;
  double write_fwhm_ns = 1000.0;
  double stokes_gate_offset_us = 1.4;
  double stokes_window_us = 2.0;
  double read_delay_us = 8.0;
  double trial_period_us = 313.0;
  std::int64_t trials_per_prep = 500;
  /// beta_BR inside the budget mirrors branching_ratio; see budget().
  EfficiencyBudget readout_budget{};
  double spin_linewidth_kHz = 45.0;
  double branching_ratio = 0.60;
  double stokes_transmission = 0.75;
  double antistokes_transmission = 0.24;
  double dark_count_rate_hz = 0.0;
  double echo_leak_fraction = 0.04;
  double echo_leak_time_us = 8.5;
  double echo_leak_fwhm_us = 1.0;
  double uncorrelated_noise_fraction_s = 0.0;
  double uncorrelated_noise_fraction_as = 0.0;
  std::uint64_t rng_seed = 1;

  // Generation-model settings.
  double antistokes_gate_start_us = 2.0; ///< relative to the read pulse
  double antistokes_gate_end_us = 10.0;  ///< relative to the read pulse
  double coincidence_jitter_fwhm_ns = 960.0;
  double generation_mode_ns = 0.0; ///< 0 selects write_fwhm_ns
  bool emission_jitter = true;     ///< Gaussian emission-time spread of write_fwhm_ns
  double stokes_envelope_decay_us = 0.0; ///< 0 disables the exponential Stokes envelope
  double noise_reference_power_uW = 0.0; ///< 0 selects write_power_uW
  double afc_prep_duration_ms = 0.0;     ///< dead time per preparation, for rate reporting
  SourceModel source_model = SourceModel::ThermalPairs;
  NoiseStatistics noise_statistics = NoiseStatistics::Thermal;
  bool splitter_stokes = false;
  bool splitter_antistokes = false;

  /// Detected Stokes probability per trial, P_s = slope * P_w.
  [[nodiscard]] double stokes_probability() const { return stokes_prob_per_uW * write_power_uW; }
  [[nodiscard]] EfficiencyBudget budget() const {
    EfficiencyBudget b = readout_budget;
    b.beta_BR = branching_ratio;
    return b;
  }
  [[nodiscard]] double generation_mode_width_ns() const {
    return generation_mode_ns > 0.0 ? generation_mode_ns : write_fwhm_ns;
  }
  [[nodiscard]] double noise_reference_power() const {
    return noise_reference_power_uW > 0.0 ? noise_reference_power_uW : write_power_uW;
  }
  /// Trials per hour including the AFC preparation dead time.
  [[nodiscard]] double trials_per_hour() const;
};

/// Default config plus the calibrated noise floor used by the reproduction presets.
[[nodiscard]] ExperimentConfig calibrated_config();

/// Returns one message per violated invariant; empty iff the config is valid.
[[nodiscard]] std::vector<std::string> validate(const ExperimentConfig& config);

/// Thrown when parsing fails or a config is used while invalid.
class ConfigError : public std::exception {
 public:
  explicit ConfigError(std::string message, std::vector<std::string> violations = {})
      : message_(std::move(message)), violations_(std::move(violations)) {}
  [[nodiscard]] const char* what() const noexcept override { return message_.c_str(); }
  [[nodiscard]] const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::string message_;
  std::vector<std::string> violations_;
};

/// Throws ConfigError listing every violation.
void require_valid(const ExperimentConfig& config);

// Flat `key = value` text, one key per field, '#' comments. Unknown keys and
// duplicate keys are errors. Keys absent from the text keep their defaults.
[[nodiscard]] ExperimentConfig parse_config(std::string_view text);
[[nodiscard]] ExperimentConfig load_config(const std::string& path);
[[nodiscard]] std::string serialize_config(const ExperimentConfig& config);

/// 64-bit FNV-1a over the serialized config.
[[nodiscard]] std::uint64_t config_hash(const ExperimentConfig& config);

[[nodiscard]] std::string_view to_string(SourceModel m);
[[nodiscard]] std::string_view to_string(NoiseStatistics n);

}  // namespace dlcz
