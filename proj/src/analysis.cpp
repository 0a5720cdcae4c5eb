#include "dlcz/analysis.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <json.hpp>
#include <numeric>

#include "dlcz/fitting.hpp"
#include "dlcz/rng.hpp"

namespace dlcz {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  const std::int64_t q = a / b;
  return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}

constexpr int channel_index(Channel c) { return c == Channel::Stokes ? 0 : 1; }

}  // namespace

std::vector<int> default_accidental_offsets() { return {-5, -4, -3, -2, -1, 1, 2, 3, 4, 5}; }

AnalysisSpec AnalysisSpec::from_config(const ExperimentConfig& config) {
  AnalysisSpec spec;
  spec.schedule = TrialSchedule::from_config(config);
  spec.afc_delay_ns = std::llround(config.afc_delay_us * 1e3);
  return spec;
}

CorrelationAccumulator::CorrelationAccumulator(AnalysisSpec spec) : spec_(std::move(spec)) {
  const auto& s = spec_.schedule;
  if (!s.is_consistent()) throw AnalysisError("analysis: inconsistent trial schedule");
  if (spec_.offsets.empty()) throw AnalysisError("analysis: accidental offsets must be nonempty");
  for (std::size_t i = 0; i < spec_.offsets.size(); ++i) {
    const int o = spec_.offsets[i];
    if (o == 0) throw AnalysisError("analysis: accidental offset 0 is the same trial");
    if (std::count(spec_.offsets.begin(), spec_.offsets.end(), o) > 1) {
      throw AnalysisError("analysis: duplicate accidental offset");
    }
    max_offset_ = std::max(max_offset_, std::abs(o));
  }
  if (spec_.stokes_cell_ns < 0) throw AnalysisError("analysis: negative Stokes cell width");
  n_cells_ = spec_.stokes_cell_ns > 0
                 ? static_cast<std::size_t>((s.stokes_gate.length() + spec_.stokes_cell_ns - 1) /
                                            spec_.stokes_cell_ns)
                 : 1;
  sum_min_ = (s.stokes_gate.start_ns - s.write_t_ns) + (s.antistokes_gate.start_ns - s.read_t_ns);
  sum_bins_ = static_cast<std::size_t>(s.stokes_gate.length() + s.antistokes_gate.length() - 1);
  auto_half_[0] = s.stokes_gate.length();
  auto_half_[1] = s.antistokes_gate.length();
  stokes_per_cell_.assign(n_cells_, 0);
  time_hist_[0].assign(static_cast<std::size_t>(s.stokes_gate.length()), 0);
  time_hist_[1].assign(static_cast<std::size_t>(s.antistokes_gate.length()), 0);
  same_.assign(n_cells_ * sum_bins_, 0);
  accidental_.assign(n_cells_ * sum_bins_, 0);
  by_offset_.assign(spec_.offsets.size() * sum_bins_, 0);
  for (int c = 0; c < 2; ++c) {
    auto_same_[c].assign(static_cast<std::size_t>(2 * auto_half_[c] + 1), 0);
    auto_acc_[c].assign(static_cast<std::size_t>(2 * auto_half_[c] + 1), 0);
  }
}

std::size_t CorrelationAccumulator::cell_of(std::int64_t t_ns) const {
  if (spec_.stokes_cell_ns <= 0) return 0;
  const auto cell = (t_ns - spec_.schedule.stokes_gate.start_ns) / spec_.stokes_cell_ns;
  return std::min(static_cast<std::size_t>(cell), n_cells_ - 1);
}

void CorrelationAccumulator::add_events(std::span<const DetectionEvent> events) { feed(events, true); }

void CorrelationAccumulator::add_context(std::span<const DetectionEvent> events) {
  feed(events, false);
}

void CorrelationAccumulator::feed(std::span<const DetectionEvent> events, bool count) {
  for (const auto& e : events) {
    if (any_seen_) {
      if (e.trial_id < last_trial_ || (e.trial_id == last_trial_ && e.t_ns < last_t_)) {
        throw AnalysisError(fmt::format(
            "event stream not sorted by (trial_id, t_ns) at trial {}", e.trial_id));
      }
      if (e.trial_id == last_trial_ && !have_pending_) {
        throw AnalysisError(fmt::format("trial {} split across calls", e.trial_id));
      }
    }
    if (have_pending_ && e.trial_id != pending_.trial) {
      process_trial(std::move(pending_), pending_counts_);
      pending_ = TrialEvents{};
      have_pending_ = false;
    }
    if (!have_pending_) {
      pending_.trial = e.trial_id;
      pending_.events.clear();
      have_pending_ = true;
      pending_counts_ = count;
    }
    pending_.events.push_back(e);
    any_seen_ = true;
    last_trial_ = e.trial_id;
    last_t_ = e.t_ns;
  }
  if (have_pending_) {
    process_trial(std::move(pending_), pending_counts_);
    pending_ = TrialEvents{};
    have_pending_ = false;
  }
}

void CorrelationAccumulator::process_trial(TrialEvents&& t, bool count) {
  const auto& s = spec_.schedule;
  TrialEvents kept;
  kept.trial = t.trial;
  for (const auto& e : t.events) {
    const auto time = static_cast<std::int64_t>(e.t_ns);
    const Gate& g = e.channel == Channel::Stokes ? s.stokes_gate : s.antistokes_gate;
    if (!g.contains(time)) {
      if (count) ++out_of_gate_;
      continue;
    }
    kept.events.push_back(e);
    if (!count) continue;
    const int ch = channel_index(e.channel);
    ++det_counts_[ch][e.detector_id];
    ++time_hist_[ch][static_cast<std::size_t>(time - g.start_ns)];
    if (e.channel == Channel::Stokes) ++stokes_per_cell_[cell_of(time)];
  }

  while (!recent_.empty() && recent_.front().trial + static_cast<std::uint64_t>(max_offset_) < kept.trial) {
    recent_.pop_front();
  }
  if (count) {
    pair_cross(kept, kept, same_, -1);
    pair_auto(kept, kept, false);
    for (const auto& prev : recent_) {
      const auto d = static_cast<int>(kept.trial - prev.trial);
      for (std::size_t oi = 0; oi < spec_.offsets.size(); ++oi) {
        const int o = spec_.offsets[oi];
        // Offset o pairs Stokes from trial k with anti-Stokes (or detector 0
        // with detector 1) from trial k + o.
        if (o == d) {
          pair_cross(prev, kept, accidental_, static_cast<int>(oi));
          pair_auto(prev, kept, true);
        } else if (o == -d) {
          pair_cross(kept, prev, accidental_, static_cast<int>(oi));
          pair_auto(kept, prev, true);
        }
      }
    }
  }
  if (!kept.events.empty()) recent_.push_back(std::move(kept));
}

void CorrelationAccumulator::pair_cross(const TrialEvents& stokes_trial, const TrialEvents& as_trial,
                                        std::vector<std::uint64_t>& per_cell, int offset_index) {
  const auto& s = spec_.schedule;
  for (const auto& a : stokes_trial.events) {
    if (a.channel != Channel::Stokes) continue;
    const auto ts = static_cast<std::int64_t>(a.t_ns);
    const std::size_t cell = cell_of(ts);
    for (const auto& b : as_trial.events) {
      if (b.channel != Channel::AntiStokes) continue;
      const std::int64_t sum =
          (ts - s.write_t_ns) + (static_cast<std::int64_t>(b.t_ns) - s.read_t_ns);
      const auto idx = static_cast<std::size_t>(sum - sum_min_);
      ++per_cell[cell * sum_bins_ + idx];
      if (offset_index >= 0) ++by_offset_[static_cast<std::size_t>(offset_index) * sum_bins_ + idx];
    }
  }
}

void CorrelationAccumulator::pair_auto(const TrialEvents& d0_trial, const TrialEvents& d1_trial,
                                       bool accidental) {
  for (const auto& a : d0_trial.events) {
    if (a.detector_id != 0) continue;
    for (const auto& b : d1_trial.events) {
      if (b.detector_id != 1 || b.channel != a.channel) continue;
      const int ch = channel_index(a.channel);
      const std::int64_t dt = static_cast<std::int64_t>(b.t_ns) - static_cast<std::int64_t>(a.t_ns);
      auto& h = accidental ? auto_acc_[ch] : auto_same_[ch];
      ++h[static_cast<std::size_t>(dt + auto_half_[ch])];
    }
  }
}

void CorrelationAccumulator::merge(const CorrelationAccumulator& other) {
  if (other.sum_bins_ != sum_bins_ || other.n_cells_ != n_cells_ || other.sum_min_ != sum_min_ ||
      other.spec_.offsets != spec_.offsets || other.auto_half_[0] != auto_half_[0] ||
      other.auto_half_[1] != auto_half_[1]) {
    throw AnalysisError("merge: accumulators were built from different analysis specs");
  }
  const auto add = [](std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  n_trials_ += other.n_trials_;
  out_of_gate_ += other.out_of_gate_;
  for (int c = 0; c < 2; ++c) {
    for (int d = 0; d < 2; ++d) det_counts_[c][d] += other.det_counts_[c][d];
    add(time_hist_[c], other.time_hist_[c]);
    add(auto_same_[c], other.auto_same_[c]);
    add(auto_acc_[c], other.auto_acc_[c]);
  }
  add(stokes_per_cell_, other.stokes_per_cell_);
  add(same_, other.same_);
  add(accidental_, other.accidental_);
  add(by_offset_, other.by_offset_);
}

std::uint64_t CorrelationAccumulator::channel_events(Channel c) const {
  const int ch = channel_index(c);
  return det_counts_[ch][0] + det_counts_[ch][1];
}

std::uint64_t CorrelationAccumulator::detector_events(Channel c, int detector) const {
  if (detector < 0 || detector > 1) throw AnalysisError("detector id must be 0 or 1");
  return det_counts_[channel_index(c)][detector];
}

double CorrelationAccumulator::accidental_exposure() const {
  if (n_trials_ == 0) return 0.0;
  const auto n = static_cast<double>(n_trials_);
  double e = 0.0;
  for (int o : spec_.offsets) e += std::max(0.0, n - std::abs(o)) / n;
  return e;
}

namespace {

std::uint64_t range_sum(const std::vector<std::uint64_t>& v, std::size_t base, std::int64_t lo_idx,
                        std::int64_t hi_idx, std::int64_t n) {
  lo_idx = std::clamp<std::int64_t>(lo_idx, 0, n);
  hi_idx = std::clamp<std::int64_t>(hi_idx, 0, n);
  std::uint64_t total = 0;
  for (std::int64_t i = lo_idx; i < hi_idx; ++i) total += v[base + static_cast<std::size_t>(i)];
  return total;
}

}  // namespace

std::uint64_t CorrelationAccumulator::same_in(std::int64_t lo, std::int64_t hi, std::size_t cell_lo,
                                              std::size_t cell_hi) const {
  cell_hi = std::min(cell_hi, n_cells_);
  std::uint64_t total = 0;
  for (std::size_t c = cell_lo; c < cell_hi; ++c) {
    total += range_sum(same_, c * sum_bins_, lo - sum_min_, hi - sum_min_,
                       static_cast<std::int64_t>(sum_bins_));
  }
  return total;
}

std::uint64_t CorrelationAccumulator::accidental_in(std::int64_t lo, std::int64_t hi,
                                                    std::size_t cell_lo, std::size_t cell_hi) const {
  cell_hi = std::min(cell_hi, n_cells_);
  std::uint64_t total = 0;
  for (std::size_t c = cell_lo; c < cell_hi; ++c) {
    total += range_sum(accidental_, c * sum_bins_, lo - sum_min_, hi - sum_min_,
                       static_cast<std::int64_t>(sum_bins_));
  }
  return total;
}

std::uint64_t CorrelationAccumulator::accidental_in_offset(std::size_t offset_index, std::int64_t lo,
                                                           std::int64_t hi) const {
  if (offset_index >= spec_.offsets.size()) throw AnalysisError("offset index out of range");
  return range_sum(by_offset_, offset_index * sum_bins_, lo - sum_min_, hi - sum_min_,
                   static_cast<std::int64_t>(sum_bins_));
}

std::uint64_t CorrelationAccumulator::auto_same_in(Channel c, std::int64_t lo, std::int64_t hi) const {
  const int ch = channel_index(c);
  return range_sum(auto_same_[ch], 0, lo + auto_half_[ch], hi + auto_half_[ch],
                   static_cast<std::int64_t>(auto_same_[ch].size()));
}

std::uint64_t CorrelationAccumulator::auto_accidental_in(Channel c, std::int64_t lo,
                                                         std::int64_t hi) const {
  const int ch = channel_index(c);
  return range_sum(auto_acc_[ch], 0, lo + auto_half_[ch], hi + auto_half_[ch],
                   static_cast<std::int64_t>(auto_acc_[ch].size()));
}

std::int64_t CorrelationAccumulator::time_histogram_origin(Channel c) const {
  const auto& s = spec_.schedule;
  return c == Channel::Stokes ? s.stokes_gate.start_ns - s.write_t_ns
                              : s.antistokes_gate.start_ns - s.read_t_ns;
}

CorrelationAccumulator accumulate(std::span<const DetectionEvent> events, const AnalysisSpec& spec,
                                  std::uint64_t n_trials) {
  CorrelationAccumulator acc(spec);
  acc.add_events(events);
  acc.add_trials(n_trials);
  return acc;
}

namespace {

// Rebins values given on the 1 ns grid v[i] at time origin + i into bins
// centred on multiples of bin_ns.
Histogram rebin(std::int64_t origin, std::size_t n, std::int64_t bin_ns,
                const std::function<double(std::size_t)>& value_at) {
  Histogram h;
  h.bin_ns = bin_ns;
  if (n == 0) return h;
  const std::int64_t half = bin_ns / 2;
  const std::int64_t k0 = floor_div(origin + half, bin_ns);
  const std::int64_t k1 = floor_div(origin + static_cast<std::int64_t>(n) - 1 + half, bin_ns);
  h.centers_ns.resize(static_cast<std::size_t>(k1 - k0 + 1));
  h.counts.assign(h.centers_ns.size(), 0.0);
  for (std::int64_t k = k0; k <= k1; ++k) {
    h.centers_ns[static_cast<std::size_t>(k - k0)] = static_cast<double>(k * bin_ns);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t t = origin + static_cast<std::int64_t>(i);
    h.counts[static_cast<std::size_t>(floor_div(t + half, bin_ns) - k0)] += value_at(i);
  }
  return h;
}

void require_bin(std::int64_t bin_ns) {
  if (bin_ns <= 0) throw AnalysisError("bin_ns must be > 0");
}

void require_window(std::int64_t window_ns) {
  if (window_ns <= 0) throw AnalysisError("window_ns must be > 0");
}

}  // namespace

CoincidenceHistogram coincidence_histogram(const CorrelationAccumulator& acc, std::int64_t bin_ns) {
  require_bin(bin_ns);
  const std::size_t nb = acc.sum_bins();
  const std::size_t nc = acc.n_cells();
  const double exposure = acc.accidental_exposure();
  std::vector<double> same(nb, 0.0);
  std::vector<double> accm(nb, 0.0);
  for (std::size_t i = 0; i < nb; ++i) {
    const auto t = acc.sum_min_ns() + static_cast<std::int64_t>(i);
    same[i] = static_cast<double>(acc.same_in(t, t + 1, 0, nc));
    accm[i] = exposure > 0.0 ? static_cast<double>(acc.accidental_in(t, t + 1, 0, nc)) / exposure : 0.0;
  }
  CoincidenceHistogram out;
  out.same_trial = rebin(acc.sum_min_ns(), nb, bin_ns, [&](std::size_t i) { return same[i]; });
  out.accidental_mean = rebin(acc.sum_min_ns(), nb, bin_ns, [&](std::size_t i) { return accm[i]; });
  for (Channel c : {Channel::Stokes, Channel::AntiStokes}) {
    const auto& th = acc.time_histogram(c);
    auto h = rebin(acc.time_histogram_origin(c), th.size(), bin_ns,
                   [&](std::size_t i) { return static_cast<double>(th[i]); });
    (c == Channel::Stokes ? out.stokes_times : out.antistokes_times) = std::move(h);
  }
  return out;
}

std::int64_t find_peak_center(const CorrelationAccumulator& acc, std::int64_t bin_ns,
                              std::int64_t search_halfwidth_ns) {
  const auto h = coincidence_histogram(acc, bin_ns);
  const auto target = static_cast<double>(acc.spec().afc_delay_ns);
  std::int64_t best = acc.spec().afc_delay_ns;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < h.same_trial.centers_ns.size(); ++i) {
    const double c = h.same_trial.centers_ns[i];
    if (std::abs(c - target) > static_cast<double>(search_halfwidth_ns)) continue;
    const double v = h.same_trial.counts[i] - h.accidental_mean.counts[i];
    if (v > best_value) {
      best_value = v;
      best = static_cast<std::int64_t>(c);
    }
  }
  return best;
}

WindowCounts window_counts(const CorrelationAccumulator& acc, std::int64_t center_ns,
                           std::int64_t window_ns, std::size_t cell_lo, std::size_t cell_hi) {
  require_window(window_ns);
  const std::int64_t lo = center_ns - window_ns / 2;
  const std::int64_t hi = lo + window_ns;
  cell_hi = std::min(cell_hi, acc.n_cells());
  WindowCounts w;
  w.same = static_cast<double>(acc.same_in(lo, hi, cell_lo, cell_hi));
  w.accidental_total = static_cast<double>(acc.accidental_in(lo, hi, cell_lo, cell_hi));
  const double exposure = acc.accidental_exposure();
  w.accidental_mean = exposure > 0.0 ? w.accidental_total / exposure : 0.0;
  for (std::size_t c = cell_lo; c < cell_hi; ++c) {
    w.stokes += static_cast<double>(acc.stokes_events_in_cell(c));
  }
  return w;
}

namespace {

Measurement ratio_with_poisson(double same, double acc_total, double acc_mean) {
  if (!(acc_total > 0.0) || !(acc_mean > 0.0)) {
    throw AnalysisError(
        "g2 undefined: no accidental coincidences in the window; increase the number of trials");
  }
  const double g = same / acc_mean;
  // max(C, 1) keeps a nonzero error when no coincidence was seen.
  const double var = std::max(same, 1.0) / (acc_mean * acc_mean) + g * g / acc_total;
  return {g, std::sqrt(var)};
}

}  // namespace

Measurement g2_from_counts(const WindowCounts& counts) {
  return ratio_with_poisson(counts.same, counts.accidental_total, counts.accidental_mean);
}

Measurement g2_cross(const CorrelationAccumulator& acc, std::int64_t center_ns, std::int64_t window_ns) {
  return g2_from_counts(window_counts(acc, center_ns, window_ns));
}

Measurement g2_auto(const CorrelationAccumulator& acc, Channel channel, std::int64_t window_ns) {
  require_window(window_ns);
  if (acc.detector_events(channel, 0) == 0 || acc.detector_events(channel, 1) == 0) {
    throw AnalysisError(fmt::format("g2_auto: {} events are all on one detector", to_string(channel)));
  }
  const std::int64_t lo = -window_ns / 2;
  const std::int64_t hi = lo + window_ns;
  const auto same = static_cast<double>(acc.auto_same_in(channel, lo, hi));
  const auto acc_total = static_cast<double>(acc.auto_accidental_in(channel, lo, hi));
  const double exposure = acc.accidental_exposure();
  return ratio_with_poisson(same, acc_total, exposure > 0.0 ? acc_total / exposure : 0.0);
}

double cauchy_schwarz_R(double g2_cross, double g2_ss, double g2_asas) {
  if (!(g2_cross > 0.0) || !(g2_ss > 0.0) || !(g2_asas > 0.0)) {
    throw AnalysisError("cauchy_schwarz_R: inputs must be > 0");
  }
  return g2_cross * g2_cross / (g2_ss * g2_asas);
}

Measurement cauchy_schwarz_R(const Measurement& g2_cross, const Measurement& g2_ss,
                             const Measurement& g2_asas) {
  const double r = cauchy_schwarz_R(g2_cross.value, g2_ss.value, g2_asas.value);
  const double a = 2.0 * g2_cross.sigma / g2_cross.value;
  const double b = g2_ss.sigma / g2_ss.value;
  const double c = g2_asas.sigma / g2_asas.value;
  return {r, r * std::sqrt(a * a + b * b + c * c)};
}

Measurement readout_efficiency(const CorrelationAccumulator& acc, std::int64_t center_ns,
                               std::int64_t window_ns) {
  const auto w = window_counts(acc, center_ns, window_ns);
  if (!(w.stokes > 0.0)) throw AnalysisError("readout_efficiency: no Stokes detections (p_s = 0)");
  const double eta = (w.same - w.accidental_mean) / w.stokes;
  double var = w.same / (w.stokes * w.stokes) + eta * eta / w.stokes;
  if (w.accidental_total > 0.0) {
    var += w.accidental_mean * w.accidental_mean / w.accidental_total / (w.stokes * w.stokes);
  }
  return {eta, std::sqrt(var)};
}

PeakShape coincidence_peak_shape(const CorrelationAccumulator& acc, std::int64_t bin_ns,
                                 std::int64_t center_ns, std::int64_t window_ns,
                                 std::int64_t fit_halfwidth_ns, std::int64_t total_halfwidth_ns) {
  require_bin(bin_ns);
  require_window(window_ns);
  const auto h = coincidence_histogram(acc, bin_ns);
  const double exposure = acc.accidental_exposure();
  std::vector<double> x, y, sig;
  for (std::size_t i = 0; i < h.same_trial.centers_ns.size(); ++i) {
    const double c = h.same_trial.centers_ns[i];
    if (std::abs(c - static_cast<double>(center_ns)) > static_cast<double>(fit_halfwidth_ns)) continue;
    const double same = h.same_trial.counts[i];
    const double am = h.accidental_mean.counts[i];
    const double at = am * exposure;
    x.push_back(c);
    y.push_back(same - am);
    sig.push_back(std::sqrt(std::max(1.0, same + (at > 0.0 ? am * am / at : 0.0))));
  }
  PeakShape out;
  const auto fit = fit::fit_gaussian_peak(x, y, sig);
  out.centroid_ns = fit.center;
  out.fwhm_ns = fit.fwhm;
  out.converged = fit.converged;

  const auto part = [&](std::int64_t lo, std::int64_t hi, double& value, double& var) {
    const auto same = static_cast<double>(acc.same_in(lo, hi));
    const auto at = static_cast<double>(acc.accidental_in(lo, hi));
    const double am = exposure > 0.0 ? at / exposure : 0.0;
    value = same - am;
    var = same + (at > 0.0 ? am * am / at : 0.0);
  };
  const std::int64_t win_lo = center_ns - window_ns / 2;
  const std::int64_t win_hi = win_lo + window_ns;
  double a = 0, va = 0, b1 = 0, vb1 = 0, b2 = 0, vb2 = 0;
  part(win_lo, win_hi, a, va);
  part(center_ns - total_halfwidth_ns, win_lo, b1, vb1);
  part(win_hi, center_ns + total_halfwidth_ns, b2, vb2);
  const double b = b1 + b2;
  const double vb = vb1 + vb2;
  const double tot = a + b;
  if (!(tot > 0.0)) throw AnalysisError("coincidence_peak_shape: no accidental-subtracted peak counts");
  out.window_fraction.value = a / tot;
  out.window_fraction.sigma = std::sqrt(b * b * va + a * a * vb) / (tot * tot);
  return out;
}

std::vector<OffsetCoincidences> coincidences_by_offset(const CorrelationAccumulator& acc,
                                                       std::int64_t center_ns, std::int64_t window_ns,
                                                       double trials_per_hour) {
  require_window(window_ns);
  const std::int64_t lo = center_ns - window_ns / 2;
  const std::int64_t hi = lo + window_ns;
  const auto n = static_cast<double>(acc.n_trials());
  std::vector<OffsetCoincidences> out;
  const auto per_hour = [&](double count, int offset) {
    const double pairs = n - std::abs(offset);
    return pairs > 0.0 ? count / pairs * trials_per_hour : 0.0;
  };
  const auto same = static_cast<double>(acc.same_in(lo, hi));
  out.push_back({0, same, per_hour(same, 0)});
  const auto& offsets = acc.spec().offsets;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const auto c = static_cast<double>(acc.accidental_in_offset(i, lo, hi));
    out.push_back({offsets[i], c, per_hour(c, offsets[i])});
  }
  std::sort(out.begin(), out.end(),
            [](const OffsetCoincidences& a, const OffsetCoincidences& b) { return a.offset < b.offset; });
  return out;
}

std::size_t mode_count(std::int64_t total_T_ns, std::int64_t delta_tau_ns) {
  if (delta_tau_ns <= 0) throw AnalysisError("mode_count: delta_tau must be > 0");
  if (delta_tau_ns > total_T_ns) throw AnalysisError("mode_count: delta_tau exceeds total T");
  return static_cast<std::size_t>(total_T_ns / delta_tau_ns);
}

MultimodeResult multimode_analysis(const CorrelationAccumulator& acc, std::int64_t total_T_ns,
                                   std::int64_t delta_tau_ns, std::int64_t window_ns,
                                   std::int64_t center_ns, double trials_per_hour) {
  MultimodeResult out;
  out.n_modes = mode_count(total_T_ns, delta_tau_ns);
  if (acc.spec().stokes_cell_ns != delta_tau_ns) {
    throw AnalysisError("multimode_analysis: accumulator cells must be delta_tau wide");
  }
  if (out.n_modes > acc.n_cells()) {
    throw AnalysisError("multimode_analysis: total T exceeds the Stokes gate");
  }
  const std::size_t nm = out.n_modes;
  std::vector<WindowCounts> cells(nm);
  for (std::size_t c = 0; c < nm; ++c) cells[c] = window_counts(acc, center_ns, window_ns, c, c + 1);
  const double exposure = acc.accidental_exposure();
  const auto n = static_cast<double>(acc.n_trials());

  // Per-row gradients of the placement-averaged g2 with respect to the per-cell
  // same-trial and accidental totals; used for correlated error propagation.
  std::vector<std::vector<double>> d_same(nm, std::vector<double>(nm, 0.0));
  std::vector<std::vector<double>> d_acc(nm, std::vector<double>(nm, 0.0));
  std::vector<double> x_us, g2s;
  for (std::size_t k = 1; k <= nm; ++k) {
    MultimodeRow row;
    row.window_ns = static_cast<std::int64_t>(k) * delta_tau_ns;
    row.placements = nm - k + 1;
    const auto P = static_cast<double>(row.placements);
    double g_sum = 0.0;
    for (std::size_t p = 0; p < row.placements; ++p) {
      double same = 0, at = 0, st = 0;
      for (std::size_t c = p; c < p + k; ++c) {
        same += cells[c].same;
        at += cells[c].accidental_total;
        st += cells[c].stokes;
      }
      if (!(at > 0.0)) {
        throw AnalysisError(
            "g2 undefined: no accidental coincidences in a multimode placement; increase trials");
      }
      const double am = at / exposure;
      const double g = same / am;
      g_sum += g;
      row.mean_coincidences += same / P;
      row.mean_stokes += st / P;
      for (std::size_t c = p; c < p + k; ++c) {
        d_same[k - 1][c] += 1.0 / am / P;
        d_acc[k - 1][c] -= g / at / P;
      }
    }
    row.g2.value = g_sum / P;
    double var = 0.0;
    for (std::size_t c = 0; c < nm; ++c) {
      var += d_same[k - 1][c] * d_same[k - 1][c] * std::max(cells[c].same, 1.0) +
             d_acc[k - 1][c] * d_acc[k - 1][c] * cells[c].accidental_total;
    }
    row.g2.sigma = std::sqrt(var);
    row.coincidences_per_hour = n > 0.0 ? row.mean_coincidences / n * trials_per_hour : 0.0;
    x_us.push_back(static_cast<double>(row.window_ns) * 1e-3);
    g2s.push_back(row.g2.value);
    out.rows.push_back(row);
  }
  if (nm < 2) return out;

  std::vector<double> coinc;
  for (const auto& r : out.rows) coinc.push_back(r.mean_coincidences);
  try {
    out.coincidence_pearson_r = fit::pearson_r(x_us, coinc);
  } catch (const fit::FitError&) {
    out.coincidence_pearson_r = 0.0;
  }

  // Weighted slope; its variance follows from the per-cell linearisation, so
  // the strong correlation between rows sharing cells is accounted for.
  std::vector<double> w(nm);
  double sw = 0, sx = 0;
  for (std::size_t k = 0; k < nm; ++k) {
    const double s = std::max(out.rows[k].g2.sigma, 1e-300);
    w[k] = 1.0 / (s * s);
    sw += w[k];
    sx += w[k] * x_us[k];
  }
  const double xm = sx / sw;
  double sxx = 0;
  for (std::size_t k = 0; k < nm; ++k) sxx += w[k] * (x_us[k] - xm) * (x_us[k] - xm);
  std::vector<double> a(nm);
  double slope = 0.0;
  for (std::size_t k = 0; k < nm; ++k) {
    a[k] = w[k] * (x_us[k] - xm) / sxx;
    slope += a[k] * g2s[k];
  }
  double var = 0.0;
  for (std::size_t c = 0; c < nm; ++c) {
    double gs = 0, ga = 0;
    for (std::size_t k = 0; k < nm; ++k) {
      gs += a[k] * d_same[k][c];
      ga += a[k] * d_acc[k][c];
    }
    var += gs * gs * std::max(cells[c].same, 1.0) + ga * ga * cells[c].accidental_total;
  }
  out.g2_slope_per_us = {slope, std::sqrt(var)};
  return out;
}

CorrelationReport analyze(const CorrelationAccumulator& acc, const ReportOptions& options) {
  require_bin(options.bin_ns);
  require_window(options.window_ns);
  if (acc.n_trials() == 0) throw AnalysisError("analyze: no trials");
  CorrelationReport r;
  r.n_trials = acc.n_trials();
  r.bin_ns = options.bin_ns;
  r.window_ns = options.window_ns;
  r.center_ns = options.center_ns ? *options.center_ns
                                  : find_peak_center(acc, options.bin_ns, options.peak_search_halfwidth_ns);
  const auto w = window_counts(acc, r.center_ns, options.window_ns);
  const auto n = static_cast<double>(r.n_trials);
  r.g2_cross = g2_from_counts(w);
  r.p_s = static_cast<double>(acc.channel_events(Channel::Stokes)) / n;
  r.p_as = static_cast<double>(acc.channel_events(Channel::AntiStokes)) / n;
  r.p_coinc = w.same / n;
  r.p_coinc_accidental = w.accidental_mean / n;
  r.coincidences = w.same;
  r.accidental_mean = w.accidental_mean;
  r.coincidences_per_hour = r.p_coinc * options.trials_per_hour;
  r.eta_RO = readout_efficiency(acc, r.center_ns, options.window_ns);
  if (options.antistokes_transmission && *options.antistokes_transmission > 0.0) {
    const double t = *options.antistokes_transmission;
    r.eta_RO_crystal = Measurement{r.eta_RO.value / t, r.eta_RO.sigma / t};
  }
  if (options.include_auto) {
    r.g2_ss = g2_auto(acc, Channel::Stokes, options.auto_window_ns);
    r.g2_asas = g2_auto(acc, Channel::AntiStokes, options.auto_window_ns);
    if (r.g2_cross.value > 0.0 && r.g2_ss->value > 0.0 && r.g2_asas->value > 0.0) {
      r.R = cauchy_schwarz_R(r.g2_cross, *r.g2_ss, *r.g2_asas);
    }
  }
  try {
    r.peak = coincidence_peak_shape(acc, options.bin_ns, r.center_ns, options.window_ns);
  } catch (const std::exception&) {
    r.peak.reset();
  }
  return r;
}

namespace {

std::string pm(const Measurement& m) { return fmt::format("{:.6g} +/- {:.3g}", m.value, m.sigma); }

nlohmann::json mjson(const Measurement& m) { return {{"value", m.value}, {"sigma", m.sigma}}; }

}  // namespace

std::string format_report(const CorrelationReport& r) {
  std::string s;
  const auto line = [&s](std::string_view k, const std::string& v) {
    s += fmt::format("{} = {}\n", k, v);
  };
  line("n_trials", fmt::format("{}", r.n_trials));
  line("bin_ns", fmt::format("{}", r.bin_ns));
  line("window_ns", fmt::format("{}", r.window_ns));
  line("center_ns", fmt::format("{}", r.center_ns));
  line("p_s", fmt::format("{:.6g}", r.p_s));
  line("p_as", fmt::format("{:.6g}", r.p_as));
  line("p_coinc", fmt::format("{:.6g}", r.p_coinc));
  line("p_coinc_accidental", fmt::format("{:.6g}", r.p_coinc_accidental));
  line("coincidences", fmt::format("{}", r.coincidences));
  line("accidental_mean", fmt::format("{:.6g}", r.accidental_mean));
  line("coincidences_per_hour", fmt::format("{:.6g}", r.coincidences_per_hour));
  line("g2_cross", pm(r.g2_cross));
  if (r.g2_ss) line("g2_ss", pm(*r.g2_ss));
  if (r.g2_asas) line("g2_asas", pm(*r.g2_asas));
  if (r.R) line("R", pm(*r.R));
  else if (r.g2_ss) line("R", "undefined (zero auto-correlation)");
  line("eta_RO", pm(r.eta_RO));
  if (r.eta_RO_crystal) line("eta_RO_crystal", pm(*r.eta_RO_crystal));
  if (r.peak) {
    line("peak_centroid_ns", pm(r.peak->centroid_ns));
    line("peak_fwhm_ns", pm(r.peak->fwhm_ns));
    line("peak_window_fraction", pm(r.peak->window_fraction));
  }
  line("classical_threshold_g2", fmt::format("{}", kClassicalThresholdG2));
  line("bell_threshold_g2", fmt::format("{}", kBellThresholdG2));
  return s;
}

std::string report_json(const CorrelationReport& r) {
  nlohmann::json j;
  j["n_trials"] = r.n_trials;
  j["bin_ns"] = r.bin_ns;
  j["window_ns"] = r.window_ns;
  j["center_ns"] = r.center_ns;
  j["p_s"] = r.p_s;
  j["p_as"] = r.p_as;
  j["p_coinc"] = r.p_coinc;
  j["p_coinc_accidental"] = r.p_coinc_accidental;
  j["coincidences"] = r.coincidences;
  j["accidental_mean"] = r.accidental_mean;
  j["coincidences_per_hour"] = r.coincidences_per_hour;
  j["g2_cross"] = mjson(r.g2_cross);
  if (r.g2_ss) j["g2_ss"] = mjson(*r.g2_ss);
  if (r.g2_asas) j["g2_asas"] = mjson(*r.g2_asas);
  if (r.R) j["R"] = mjson(*r.R);
  j["eta_RO"] = mjson(r.eta_RO);
  if (r.eta_RO_crystal) j["eta_RO_crystal"] = mjson(*r.eta_RO_crystal);
  if (r.peak) {
    j["peak"] = {{"centroid_ns", mjson(r.peak->centroid_ns)},
                 {"fwhm_ns", mjson(r.peak->fwhm_ns)},
                 {"window_fraction", mjson(r.peak->window_fraction)},
                 {"converged", r.peak->converged}};
  }
  j["classical_threshold_g2"] = kClassicalThresholdG2;
  j["bell_threshold_g2"] = kBellThresholdG2;
  return j.dump(2);
}

double bootstrap_g2_sigma(std::span<const DetectionEvent> events, const AnalysisSpec& spec,
                          std::uint64_t n_trials, std::int64_t center_ns, std::int64_t window_ns,
                          std::size_t n_blocks, std::size_t n_resamples, std::uint64_t seed) {
  if (n_blocks < 2 || n_trials < n_blocks) throw AnalysisError("bootstrap: need >= 2 nonempty blocks");
  require_sorted(events);
  int max_offset = 0;
  for (int o : spec.offsets) max_offset = std::max(max_offset, std::abs(o));
  const auto first_event_of = [&](std::uint64_t trial) {
    return std::lower_bound(events.begin(), events.end(), trial,
                            [](const DetectionEvent& e, std::uint64_t t) { return e.trial_id < t; }) -
           events.begin();
  };
  std::vector<double> same(n_blocks), acc_total(n_blocks), pairs(n_blocks), trials(n_blocks);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const std::uint64_t t0 = n_trials * b / n_blocks;
    const std::uint64_t t1 = n_trials * (b + 1) / n_blocks;
    const std::uint64_t c0 = t0 > static_cast<std::uint64_t>(max_offset) ? t0 - max_offset : 0;
    const auto ic = first_event_of(c0);
    const auto i0 = first_event_of(t0);
    const auto i1 = first_event_of(t1);
    CorrelationAccumulator acc(spec);
    acc.add_context(events.subspan(static_cast<std::size_t>(ic), static_cast<std::size_t>(i0 - ic)));
    acc.add_events(events.subspan(static_cast<std::size_t>(i0), static_cast<std::size_t>(i1 - i0)));
    const std::int64_t lo = center_ns - window_ns / 2;
    same[b] = static_cast<double>(acc.same_in(lo, lo + window_ns));
    acc_total[b] = static_cast<double>(acc.accidental_in(lo, lo + window_ns));
    trials[b] = static_cast<double>(t1 - t0);
    // Cross-trial pairs are attributed to the later trial of the pair.
    for (int o : spec.offsets) {
      const auto d = static_cast<std::uint64_t>(std::abs(o));
      const std::uint64_t from = std::max(t0, d);
      pairs[b] += t1 > from ? static_cast<double>(t1 - from) : 0.0;
    }
  }
  TrialRng rng(seed, 0);
  std::vector<double> g(n_resamples);
  for (std::size_t r = 0; r < n_resamples; ++r) {
    double s = 0, a = 0, p = 0, n = 0;
    for (std::size_t i = 0; i < n_blocks; ++i) {
      const std::size_t b = rng() % n_blocks;
      s += same[b];
      a += acc_total[b];
      p += pairs[b];
      n += trials[b];
    }
    g[r] = a > 0.0 ? s / (a / (p / n)) : 0.0;
  }
  const double mean = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
  double var = 0.0;
  for (double v : g) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(g.size() - 1));
}

}  // namespace dlcz
