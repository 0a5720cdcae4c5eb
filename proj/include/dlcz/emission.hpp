#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dlcz/config.hpp"
#include "dlcz/events.hpp"

namespace dlcz {

/// Absolute background levels at the detectors. Resolved once from the
/// configured fractions at the noise reference power, then held fixed so a
/// sweep over write power sees a constant noise floor.
struct NoiseLevels {
  double stokes_per_ns = 0.0;      ///< mean uncorrelated Stokes photons per ns of gate
  double antistokes_per_ns = 0.0;  ///< mean uncorrelated anti-Stokes photons per ns of gate
  double echo_mean_per_uW = 0.0;   ///< mean echo-leak photons per trial per uW of write power
};

[[nodiscard]] NoiseLevels resolve_noise(const ExperimentConfig& config);

/// One temporal emission mode inside the Stokes gate.
struct EmissionMode {
  double start_ns = 0.0;
  double width_ns = 0.0;
  double mean_photons = 0.0;       ///< pre-loss mean photon number of the mode
  double in_gate_probability = 0.0;///< chance an emitted photon's time lands in the gate
  double mean_retrieval = 0.0;     ///< spin-wave retrieval probability averaged over the mode
};

/// Everything the per-trial sampler needs, derived from a validated config.
struct EmissionPlan {
  ExperimentConfig config;
  TrialSchedule schedule;
  NoiseLevels noise;
  std::vector<EmissionMode> modes;
  double retrieval_base = 0.0;    ///< eta_RP * eta_reph * beta_BR
  double decay_time_ns = 0.0;
  double emission_sigma_ns = 0.0;
  double pair_sigma_ns = 0.0;
  double echo_mean = 0.0;
  double echo_center_ns = 0.0;
  double echo_sigma_ns = 0.0;
  double dark_mean_stokes = 0.0;     ///< per detector
  double dark_mean_antistokes = 0.0; ///< per detector
  /// Mean detected anti-Stokes photons per trial from retrieved spin-waves.
  double expected_antistokes_signal = 0.0;

  [[nodiscard]] double source_brightness() const;
  /// Retrieval probability of a spin-wave created by a photon emitted at t_ns.
  [[nodiscard]] double retrieval_probability(double emission_t_ns) const;
};

/// Builds the plan; `fixed_noise` overrides the noise resolved from the config.
/// Throws ConfigError if the config is invalid.
[[nodiscard]] EmissionPlan make_plan(const ExperimentConfig& config,
                                     std::optional<NoiseLevels> fixed_noise = std::nullopt);

/// Monte-Carlo generator of detection events, one trial at a time.
class EmissionSimulator {
 public:
  explicit EmissionSimulator(const ExperimentConfig& config,
                             std::optional<NoiseLevels> fixed_noise = std::nullopt);

  /// Appends the trial's events (sorted by t_ns) to `out`.
  void simulate_trial(std::uint64_t trial, std::vector<DetectionEvent>& out) const;

  [[nodiscard]] const EmissionPlan& plan() const { return plan_; }
  /// Probability that a trial produces no photons at all.
  [[nodiscard]] double empty_trial_probability() const { return suffix_zero_.empty() ? 1.0 : suffix_zero_.front(); }

 private:
  enum class Kind : std::uint8_t { PairMode, StokesOnlyMode, AntiStokesOnlyMode, StokesNoise, AntiStokesNoise, Echo, Dark };
  struct Component {
    Kind kind;
    bool thermal;
    std::uint8_t channel;   // Dark only
    std::uint8_t detector;  // Dark only
    std::uint32_t index;    // mode or noise-cell index
    double mean;
    double zero_probability;
    double cell_start_ns;
    double cell_width_ns;
  };

  EmissionPlan plan_;
  std::vector<Component> components_;
  std::vector<double> suffix_zero_;
};

using EventSink = std::function<void(std::span<const DetectionEvent>)>;

struct RunOptions {
  std::uint64_t first_trial = 0;
  unsigned threads = 1;
  std::uint64_t chunk_trials = 1U << 16;
};

/// Simulates trials [first_trial, first_trial + n_trials) and feeds the events
/// to `sink` in stream order. Output is independent of the thread count.
void run_trials(const EmissionSimulator& sim, std::uint64_t n_trials, const EventSink& sink,
                const RunOptions& options = {});

[[nodiscard]] std::vector<DetectionEvent> run_trials(const ExperimentConfig& config,
                                                     std::uint64_t n_trials,
                                                     const RunOptions& options = {});

enum class SweepAxis { WritePower, StorageTime, WindowT };

[[nodiscard]] std::string_view to_string(SweepAxis axis);
[[nodiscard]] SweepAxis parse_sweep_axis(std::string_view name);

/// Lazily simulated stream for one sweep value.
struct SweepPoint {
  double value = 0.0;
  ExperimentConfig config;
  NoiseLevels noise;
  std::uint64_t n_trials = 0;

  [[nodiscard]] EmissionSimulator simulator() const { return EmissionSimulator(config, noise); }
  [[nodiscard]] std::vector<DetectionEvent> events(unsigned threads = 1) const;
};

/// One independent simulation per value, each seeded from (config seed, index).
/// Storage-time values are mean spin storage times; the read delay is moved so
/// that read - centre of Stokes gate equals the value. Window values resize the
/// Stokes gate at constant brightness per unit time.
[[nodiscard]] std::vector<SweepPoint> run_sweep(const ExperimentConfig& config, SweepAxis axis,
                                                std::span<const double> values,
                                                std::uint64_t n_trials);

}  // namespace dlcz
