#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlcz/config.hpp"
#include "dlcz/events.hpp"
#include "dlcz/measurement.hpp"

namespace dlcz {

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Accidental coincidences are taken from Stokes and anti-Stokes detections
/// this many trials apart.
[[nodiscard]] std::vector<int> default_accidental_offsets();

struct AnalysisSpec {
  TrialSchedule schedule;
  std::int64_t afc_delay_ns = 8000;
  std::vector<int> offsets = default_accidental_offsets();
  /// Width of the Stokes-time cells kept separately for multimode analysis;
  /// 0 keeps the whole Stokes gate as one cell.
  std::int64_t stokes_cell_ns = 0;

  [[nodiscard]] static AnalysisSpec from_config(const ExperimentConfig& config);
};

/// Single-pass fold of an event stream into 1 ns resolution coincidence
/// histograms. Same-trial pairs and pairs from trials `offset` apart are kept
/// apart. Accumulators built over disjoint trial ranges merge exactly, provided
/// each one was given the preceding trials through add_context().
class CorrelationAccumulator {
 public:
  explicit CorrelationAccumulator(AnalysisSpec spec);

  /// Events in stream order; successive calls continue the stream.
  void add_events(std::span<const DetectionEvent> events);
  /// Events from trials before this shard. They only act as partners of
  /// later trials and are not counted themselves.
  void add_context(std::span<const DetectionEvent> events);
  /// Number of trials covered (including those without events).
  void add_trials(std::uint64_t n) { n_trials_ += n; }
  void merge(const CorrelationAccumulator& other);

  [[nodiscard]] const AnalysisSpec& spec() const { return spec_; }
  [[nodiscard]] std::uint64_t n_trials() const { return n_trials_; }
  [[nodiscard]] std::size_t n_cells() const { return n_cells_; }
  [[nodiscard]] std::int64_t sum_min_ns() const { return sum_min_; }
  [[nodiscard]] std::size_t sum_bins() const { return sum_bins_; }
  [[nodiscard]] std::uint64_t channel_events(Channel c) const;
  [[nodiscard]] std::uint64_t detector_events(Channel c, int detector) const;
  [[nodiscard]] std::uint64_t stokes_events_in_cell(std::size_t cell) const { return stokes_per_cell_[cell]; }
  [[nodiscard]] std::uint64_t out_of_gate_events() const { return out_of_gate_; }

  /// Effective number of trial pairs for accidentals, divided by n_trials:
  /// sum over offsets of (N - |o|) / N.
  [[nodiscard]] double accidental_exposure() const;

  /// Same-trial / accidental (summed over offsets) pair counts with
  /// T_s + T_as in [lo, hi) ns, restricted to Stokes cells [cell_lo, cell_hi).
  [[nodiscard]] std::uint64_t same_in(std::int64_t lo, std::int64_t hi, std::size_t cell_lo = 0,
                                      std::size_t cell_hi = SIZE_MAX) const;
  [[nodiscard]] std::uint64_t accidental_in(std::int64_t lo, std::int64_t hi,
                                            std::size_t cell_lo = 0,
                                            std::size_t cell_hi = SIZE_MAX) const;
  /// Accidental pair count for one offset, over all cells.
  [[nodiscard]] std::uint64_t accidental_in_offset(std::size_t offset_index, std::int64_t lo,
                                                   std::int64_t hi) const;
  /// Detector 0 x detector 1 pairs on one channel with t1 - t0 in [lo, hi).
  [[nodiscard]] std::uint64_t auto_same_in(Channel c, std::int64_t lo, std::int64_t hi) const;
  [[nodiscard]] std::uint64_t auto_accidental_in(Channel c, std::int64_t lo, std::int64_t hi) const;

  /// Per-channel detection-time histograms at 1 ns, relative to the write
  /// pulse (Stokes) or the read pulse (anti-Stokes), starting at the gate.
  [[nodiscard]] const std::vector<std::uint64_t>& time_histogram(Channel c) const {
    return c == Channel::Stokes ? time_hist_[0] : time_hist_[1];
  }
  [[nodiscard]] std::int64_t time_histogram_origin(Channel c) const;

 private:
  struct TrialEvents {
    std::uint64_t trial = 0;
    std::vector<DetectionEvent> events;
  };

  void process_trial(TrialEvents&& t, bool count);
  void pair_cross(const TrialEvents& stokes_trial, const TrialEvents& as_trial,
                  std::vector<std::uint64_t>& per_cell, int offset_index);
  void pair_auto(const TrialEvents& d0_trial, const TrialEvents& d1_trial, bool accidental);
  void feed(std::span<const DetectionEvent> events, bool count);
  [[nodiscard]] std::size_t cell_of(std::int64_t t_ns) const;

  AnalysisSpec spec_;
  std::size_t n_cells_ = 1;
  std::int64_t sum_min_ = 0;
  std::size_t sum_bins_ = 0;
  std::int64_t auto_half_[2] = {0, 0};
  int max_offset_ = 0;

  std::uint64_t n_trials_ = 0;
  std::uint64_t out_of_gate_ = 0;
  std::uint64_t det_counts_[2][2] = {{0, 0}, {0, 0}};
  std::vector<std::uint64_t> stokes_per_cell_;
  std::vector<std::uint64_t> time_hist_[2];
  std::vector<std::uint64_t> same_;           // [cell][sum]
  std::vector<std::uint64_t> accidental_;     // [cell][sum]
  std::vector<std::uint64_t> by_offset_;      // [offset][sum]
  std::vector<std::uint64_t> auto_same_[2];   // [dt + half]
  std::vector<std::uint64_t> auto_acc_[2];

  std::deque<TrialEvents> recent_;
  TrialEvents pending_;
  bool have_pending_ = false;
  bool pending_counts_ = true;
  std::uint64_t last_trial_ = 0;
  std::uint32_t last_t_ = 0;
  bool any_seen_ = false;
};

/// Convenience: fold a whole stream covering `n_trials` trials.
[[nodiscard]] CorrelationAccumulator accumulate(std::span<const DetectionEvent> events,
                                                const AnalysisSpec& spec, std::uint64_t n_trials);

struct Histogram {
  std::int64_t bin_ns = 0;
  std::vector<double> centers_ns;
  std::vector<double> counts;
};

struct CoincidenceHistogram {
  Histogram same_trial;           ///< over T_s + T_as
  Histogram accidental_mean;      ///< cross-trial pairs divided by the accidental exposure
  Histogram stokes_times;         ///< T_s
  Histogram antistokes_times;     ///< T_as
};

/// Bins are centred on multiples of bin_ns.
[[nodiscard]] CoincidenceHistogram coincidence_histogram(const CorrelationAccumulator& acc,
                                                         std::int64_t bin_ns);

/// Centre (sum time) of the accidental-subtracted peak bin within
/// +/- search_halfwidth_ns of the AFC delay.
[[nodiscard]] std::int64_t find_peak_center(const CorrelationAccumulator& acc, std::int64_t bin_ns,
                                            std::int64_t search_halfwidth_ns = 1000);

/// Counts entering the cross-correlation estimate for a window.
struct WindowCounts {
  double same = 0.0;
  double accidental_total = 0.0;  ///< summed over all offsets
  double accidental_mean = 0.0;   ///< normalised to one trial-aligned exposure
  double stokes = 0.0;
};

[[nodiscard]] WindowCounts window_counts(const CorrelationAccumulator& acc, std::int64_t center_ns,
                                         std::int64_t window_ns, std::size_t cell_lo = 0,
                                         std::size_t cell_hi = SIZE_MAX);

/// g2_{s,as}: same-trial coincidences over the mean cross-trial coincidences
/// in a window of width window_ns centred at center_ns. Poisson errors.
[[nodiscard]] Measurement g2_cross(const CorrelationAccumulator& acc, std::int64_t center_ns,
                                   std::int64_t window_ns);
[[nodiscard]] Measurement g2_from_counts(const WindowCounts& counts);

/// Auto-correlation between the two detectors of one channel, |t1 - t0| < window_ns / 2.
[[nodiscard]] Measurement g2_auto(const CorrelationAccumulator& acc, Channel channel,
                                  std::int64_t window_ns);

/// (g2_cross)^2 / (g2_ss g2_asas) with first-order error propagation.
[[nodiscard]] Measurement cauchy_schwarz_R(const Measurement& g2_cross, const Measurement& g2_ss,
                                           const Measurement& g2_asas);
[[nodiscard]] double cauchy_schwarz_R(double g2_cross, double g2_ss, double g2_asas);

/// (p_coinc - p_accidental) / p_s at the detectors.
[[nodiscard]] Measurement readout_efficiency(const CorrelationAccumulator& acc,
                                             std::int64_t center_ns, std::int64_t window_ns);

struct PeakShape {
  Measurement centroid_ns;
  Measurement fwhm_ns;
  /// Fraction of the accidental-subtracted peak inside the window.
  Measurement window_fraction;
  bool converged = false;
};

/// Gaussian fit to the accidental-subtracted histogram (bins within
/// +/- fit_halfwidth_ns of center) and the in-window fraction relative to
/// +/- total_halfwidth_ns.
[[nodiscard]] PeakShape coincidence_peak_shape(const CorrelationAccumulator& acc,
                                               std::int64_t bin_ns, std::int64_t center_ns,
                                               std::int64_t window_ns,
                                               std::int64_t fit_halfwidth_ns = 1000,
                                               std::int64_t total_halfwidth_ns = 2500);

struct OffsetCoincidences {
  int offset = 0;  ///< 0 is the same trial
  double coincidences = 0.0;
  double per_hour = 0.0;
};

/// Coincidences in the window for the same trial and each accidental offset.
[[nodiscard]] std::vector<OffsetCoincidences> coincidences_by_offset(
    const CorrelationAccumulator& acc, std::int64_t center_ns, std::int64_t window_ns,
    double trials_per_hour);

struct MultimodeRow {
  std::int64_t window_ns = 0;
  std::size_t placements = 0;
  double mean_coincidences = 0.0;
  double coincidences_per_hour = 0.0;
  double mean_stokes = 0.0;
  Measurement g2;
};

struct MultimodeResult {
  std::size_t n_modes = 0;
  std::vector<MultimodeRow> rows;
  double coincidence_pearson_r = 0.0;
  Measurement g2_slope_per_us;
};

/// For every Stokes window of k * delta_tau (k = 1..N_m), averages the
/// coincidences and g2 over all placements inside total_T. The accumulator
/// must have been built with stokes_cell_ns = delta_tau_ns.
[[nodiscard]] MultimodeResult multimode_analysis(const CorrelationAccumulator& acc,
                                                 std::int64_t total_T_ns, std::int64_t delta_tau_ns,
                                                 std::int64_t window_ns, std::int64_t center_ns,
                                                 double trials_per_hour);

/// N_m = floor(T / delta_tau).
[[nodiscard]] std::size_t mode_count(std::int64_t total_T_ns, std::int64_t delta_tau_ns);

struct ReportOptions {
  std::int64_t bin_ns = 400;
  std::int64_t window_ns = 1000;
  std::optional<std::int64_t> center_ns;  ///< default: peak search around the AFC delay
  std::int64_t peak_search_halfwidth_ns = 1000;
  bool include_auto = false;
  std::int64_t auto_window_ns = 1000;
  /// Used to back-propagate the read-out efficiency to the crystal.
  std::optional<double> antistokes_transmission;
  double trials_per_hour = 0.0;
};

struct CorrelationReport {
  Measurement g2_cross;
  std::optional<Measurement> g2_ss;
  std::optional<Measurement> g2_asas;
  std::optional<Measurement> R;
  double p_s = 0.0;
  double p_as = 0.0;
  double p_coinc = 0.0;
  double p_coinc_accidental = 0.0;
  Measurement eta_RO;
  std::optional<Measurement> eta_RO_crystal;
  std::uint64_t n_trials = 0;
  std::int64_t bin_ns = 0;
  std::int64_t window_ns = 0;
  std::int64_t center_ns = 0;
  double coincidences = 0.0;
  double accidental_mean = 0.0;
  double coincidences_per_hour = 0.0;
  std::optional<PeakShape> peak;
};

[[nodiscard]] CorrelationReport analyze(const CorrelationAccumulator& acc,
                                        const ReportOptions& options);

/// Key-value text rendering, one `key = value` per line.
[[nodiscard]] std::string format_report(const CorrelationReport& report);
/// Machine-readable rendering.
[[nodiscard]] std::string report_json(const CorrelationReport& report);

/// Bell-violation threshold for g2_{s,as} quoted for two stored modes; reported, not computed.
inline constexpr double kBellThresholdG2 = 6.0;
/// g2_{s,as} above this value violates Cauchy-Schwarz for thermal autocorrelations.
inline constexpr double kClassicalThresholdG2 = 2.0;

/// Block bootstrap over contiguous groups of trials: standard deviation of
/// g2_cross across resamples. Cross-check for the Poisson error.
[[nodiscard]] double bootstrap_g2_sigma(std::span<const DetectionEvent> events,
                                        const AnalysisSpec& spec, std::uint64_t n_trials,
                                        std::int64_t center_ns, std::int64_t window_ns,
                                        std::size_t n_blocks = 50, std::size_t n_resamples = 200,
                                        std::uint64_t seed = 1);

}  // namespace dlcz
