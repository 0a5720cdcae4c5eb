#include "dlcz/presets.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dlcz/afc_memory.hpp"
#include "dlcz/analysis.hpp"
#include "dlcz/csv.hpp"
#include "dlcz/emission.hpp"
#include "dlcz/fitting.hpp"
#include "dlcz/pipeline.hpp"

namespace dlcz {

namespace {

constexpr std::int64_t kBinNs = 400;
constexpr std::int64_t kWindowNs = 1000;
constexpr std::int64_t kTimeBinNs = 100;

BandCheck in_band(std::string name, Measurement m, double lo, double hi) {
  return {std::move(name), m, fmt::format("[{}, {}]", lo, hi), m.value >= lo && m.value <= hi};
}

struct Context {
  std::string preset;
  PresetOptions options;
  PresetResult result;

  OutputHeader header(const ExperimentConfig& cfg, std::uint64_t trials, std::string extra = {}) const {
    OutputHeader h;
    h.seed = cfg.rng_seed;
    h.config_hash = config_hash(cfg);
    h.extra = fmt::format("preset={} trials={}", preset, trials);
    if (!extra.empty()) h.extra += "\n" + extra;
    return h;
  }

  void write(const std::string& name, const std::string& content) {
    const auto path = options.out_dir / name;
    write_text_file(path, content);
    result.files.push_back(path);
  }

  void table(const std::string& name, const CsvTable& t, const ExperimentConfig& cfg,
             std::uint64_t trials, std::string extra = {}) {
    write(name, t.render(header(cfg, trials, std::move(extra))));
  }
};

/// Simulates one configuration; optionally taps the stream into an event file.
CorrelationAccumulator simulate(Context& ctx, const ExperimentConfig& cfg,
                                std::optional<NoiseLevels> noise, const AnalysisSpec& spec,
                                std::uint64_t trials, const std::string& events_name) {
  const EmissionSimulator sim(cfg, noise);
  PipelineOptions po;
  po.threads = ctx.options.threads;
  if (!ctx.options.write_events) return simulate_and_accumulate(sim, spec, trials, po);
  const auto path = ctx.options.out_dir / events_name;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  const auto header = ctx.header(cfg, trials);
  EventWriter writer(f, EventFileFormat::Binary, header);
  const EventSink tap = [&](std::span<const DetectionEvent> ev) { writer.write(ev); };
  po.tap = &tap;
  auto acc = simulate_and_accumulate(sim, spec, trials, po);
  f.flush();
  if (!f) throw std::runtime_error(fmt::format("write failed for '{}'", path.string()));
  ctx.result.files.push_back(path);
  ctx.write(events_name + ".meta", header.render());
  return acc;
}

CsvTable histogram_csv(const Histogram& h, std::string_view time_column, double scale_to_us) {
  CsvTable t;
  t.columns = {std::string(time_column), "counts"};
  for (std::size_t i = 0; i < h.counts.size(); ++i) t.add({h.centers_ns[i] * scale_to_us, h.counts[i]});
  return t;
}

void fig2c(Context& ctx, const ExperimentConfig& base, std::uint64_t trials) {
  const std::vector<double> powers{2, 4, 8, 16, 32, 64};
  const auto points = run_sweep(base, SweepAxis::WritePower, powers, trials);
  CsvTable t;
  t.columns = {"write_power_uW", "p_s_configured", "p_click", "p_click_sigma"};
  std::vector<double> x, y, s;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& pt = points[i];
    const auto acc = simulate(ctx, pt.config, pt.noise, AnalysisSpec::from_config(pt.config), trials,
                              fmt::format("fig2c_events_{}.bin", i));
    const double n = static_cast<double>(acc.n_trials());
    const double p = static_cast<double>(acc.channel_events(Channel::Stokes)) / n;
    const double sig = std::sqrt(std::max(p * (1.0 - p), 1.0 / n) / n);
    t.add({pt.value, pt.config.stokes_probability(), p, sig});
    x.push_back(pt.value);
    y.push_back(p);
    s.push_back(sig);
  }
  ctx.table("fig2c_stokes_probability.csv", t, base, trials);
  // Clicks from signal and the fixed noise floor combine as
  // p = a + (1 - a) * slope * P_w, so the signal slope is b / (1 - a).
  const auto fit = fit::fit_linear(x, y, s);
  const double a = fit.intercept.value;
  const Measurement slope{fit.slope.value / (1.0 - a), fit.slope.sigma / (1.0 - a)};
  CsvTable f;
  f.columns = {"slope_per_uW", "slope_sigma", "intercept", "intercept_sigma", "configured_slope_per_uW"};
  f.add({slope.value, slope.sigma, fit.intercept.value, fit.intercept.sigma, base.stokes_prob_per_uW});
  ctx.table("fig2c_fit.csv", f, base, trials);
  ctx.result.values["slope_per_uW"] = slope;
  ctx.result.values["intercept"] = fit.intercept;
  ctx.result.checks.push_back({"stokes slope recovered", slope,
                               fmt::format("within 3 sigma of {}", base.stokes_prob_per_uW),
                               slope.deviations_from(base.stokes_prob_per_uW) <= 3.0});
}

void fig3b(Context& ctx, const ExperimentConfig& cfg, std::uint64_t trials) {
  const auto spec = AnalysisSpec::from_config(cfg);
  const auto acc = simulate(ctx, cfg, std::nullopt, spec, trials, "fig3b_events.bin");
  ReportOptions ro;
  ro.bin_ns = kBinNs;
  ro.window_ns = kWindowNs;
  ro.include_auto = true;
  ro.antistokes_transmission = cfg.antistokes_transmission;
  ro.trials_per_hour = cfg.trials_per_hour();
  const auto report = analyze(acc, ro);
  ctx.write("fig3b_report.txt", ctx.header(cfg, trials).render() + format_report(report));
  ctx.write("fig3b_report.json", report_json(report) + "\n");

  const auto h = coincidence_histogram(acc, kBinNs);
  CsvTable ht;
  ht.columns = {"sum_time_us", "same_trial", "accidental_mean", "subtracted"};
  for (std::size_t i = 0; i < h.same_trial.counts.size(); ++i) {
    ht.add({h.same_trial.centers_ns[i] * 1e-3, h.same_trial.counts[i], h.accidental_mean.counts[i],
            h.same_trial.counts[i] - h.accidental_mean.counts[i]});
  }
  ctx.table("fig3b_coincidence_histogram.csv", ht, cfg, trials);

  CsvTable ot;
  ot.columns = {"trial_offset", "separation_us", "coincidences", "coincidences_per_hour"};
  for (const auto& o : coincidences_by_offset(acc, report.center_ns, kWindowNs, cfg.trials_per_hour())) {
    ot.add({static_cast<double>(o.offset), o.offset * cfg.trial_period_us, o.coincidences, o.per_hour});
  }
  ctx.table("fig3b_offsets.csv", ot, cfg, trials,
            fmt::format("trials_per_hour={} afc_prep_duration_ms={}", cfg.trials_per_hour(),
                        cfg.afc_prep_duration_ms));

  const auto times = coincidence_histogram(acc, kTimeBinNs);
  ctx.table("fig3b_stokes_times.csv", histogram_csv(times.stokes_times, "t_after_write_us", 1e-3), cfg,
            trials);
  ctx.table("fig3b_antistokes_times.csv",
            histogram_csv(times.antistokes_times, "t_after_read_us", 1e-3), cfg, trials);

  auto& v = ctx.result.values;
  v["g2_cross"] = report.g2_cross;
  v["g2_ss"] = *report.g2_ss;
  v["g2_asas"] = *report.g2_asas;
  v["eta_RO"] = report.eta_RO;
  v["eta_RO_crystal"] = *report.eta_RO_crystal;
  v["g2_cross_400ns"] = g2_cross(acc, report.center_ns, 400);
  auto& c = ctx.result.checks;
  c.push_back(in_band("g2_s,as(1 us)", report.g2_cross, 17, 25));
  c.push_back(in_band("g2_ss", *report.g2_ss, 1.3, 2.3));
  c.push_back(in_band("g2_as,as", *report.g2_asas, 1.3, 2.3));
  if (report.R) {
    v["R"] = *report.R;
    const double r_sig = report.R->sigma > 0 ? (report.R->value - 1.0) / report.R->sigma : 0.0;
    v["R_significance"] = {r_sig, 0.0};
    c.push_back({"R > 1 by >= 3 sigma", *report.R, fmt::format("(R - 1) / sigma = {:.2f} >= 3", r_sig),
                 r_sig >= 3.0});
  } else {
    c.push_back({"R > 1 by >= 3 sigma", {}, "R undefined: an auto-correlation is zero", false});
  }
  if (report.peak) {
    const auto& pk = *report.peak;
    v["peak_centroid_ns"] = pk.centroid_ns;
    v["peak_fwhm_ns"] = pk.fwhm_ns;
    v["beta_G"] = pk.window_fraction;
    const double tau = cfg.afc_delay_us * 1e3;
    c.push_back(in_band("peak centroid (ns)", pk.centroid_ns, tau - kBinNs, tau + kBinNs));
    c.push_back(in_band("peak FWHM (ns)", pk.fwhm_ns, 790, 1090));
    c.push_back(in_band("beta_G in 1 us window", pk.window_fraction, 0.71, 0.81));
  } else {
    c.push_back({"peak fit", {}, "Gaussian fit converges", false});
  }
}

void fig3c(Context& ctx, const ExperimentConfig& base, std::uint64_t trials) {
  const std::vector<double> powers{0.5, 1, 2, 4, 8, 16, 32, 64};
  const auto points = run_sweep(base, SweepAxis::WritePower, powers, trials);
  CsvTable t;
  t.columns = {"write_power_uW", "p_s_configured", "p_s_detected", "g2_cross", "g2_cross_sigma",
               "eta_RO_crystal", "eta_RO_crystal_sigma", "coincidences"};
  std::vector<Measurement> g2;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& pt = points[i];
    const auto acc = simulate(ctx, pt.config, pt.noise, AnalysisSpec::from_config(pt.config), trials,
                              fmt::format("fig3c_events_{}.bin", i));
    ReportOptions ro;
    ro.bin_ns = kBinNs;
    ro.window_ns = kWindowNs;
    ro.center_ns = std::llround(pt.config.afc_delay_us * 1e3);
    ro.antistokes_transmission = pt.config.antistokes_transmission;
    const auto r = analyze(acc, ro);
    t.add({pt.value, pt.config.stokes_probability(), r.p_s, r.g2_cross.value, r.g2_cross.sigma,
           r.eta_RO_crystal->value, r.eta_RO_crystal->sigma, r.coincidences});
    g2.push_back(r.g2_cross);
    ctx.result.values[fmt::format("g2_at_{}uW", pt.value)] = r.g2_cross;
  }
  ctx.table("fig3c_g2_vs_ps.csv", t, base, trials);
  const auto peak = static_cast<std::size_t>(
      std::max_element(g2.begin(), g2.end(), [](auto& a, auto& b) { return a.value < b.value; }) -
      g2.begin());
  const auto drop = [&](std::size_t i) {
    const double s = std::hypot(g2[i].sigma, g2[peak].sigma);
    return Measurement{g2[peak].value - g2[i].value, s};
  };
  const bool interior = peak > 0 && peak + 1 < g2.size();
  const auto low = drop(0);
  const auto high = drop(g2.size() - 1);
  ctx.result.checks.push_back({"g2 maximum at an interior P_s", g2[peak],
                               fmt::format("peak index {} of {}", peak, g2.size()), interior});
  ctx.result.checks.push_back({"g2 falls towards low P_s", low, "drop >= 2 sigma",
                               low.value >= 2.0 * low.sigma});
  ctx.result.checks.push_back({"g2 falls towards high P_s", high, "drop >= 2 sigma",
                               high.value >= 2.0 * high.sigma});
}

void fig4a(Context& ctx, const ExperimentConfig& base, std::uint64_t trials) {
  const std::vector<double> storage{2, 5, 8, 12, 15};
  const auto points = run_sweep(base, SweepAxis::StorageTime, storage, trials);
  CsvTable t;
  t.columns = {"storage_time_us", "eta_RO", "eta_RO_sigma", "eta_RO_crystal", "eta_RO_crystal_sigma",
               "g2_cross", "g2_cross_sigma"};
  std::vector<double> x, y, s;
  std::optional<std::int64_t> center;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& pt = points[i];
    const auto acc = simulate(ctx, pt.config, pt.noise, AnalysisSpec::from_config(pt.config), trials,
                              fmt::format("fig4a_events_{}.bin", i));
    // The shortest storage time has the strongest peak; its centre is reused.
    if (!center) center = find_peak_center(acc, kBinNs);
    ReportOptions ro;
    ro.bin_ns = kBinNs;
    ro.window_ns = kWindowNs;
    ro.center_ns = center;
    ro.antistokes_transmission = pt.config.antistokes_transmission;
    const auto r = analyze(acc, ro);
    t.add({pt.value, r.eta_RO.value, r.eta_RO.sigma, r.eta_RO_crystal->value, r.eta_RO_crystal->sigma,
           r.g2_cross.value, r.g2_cross.sigma});
    x.push_back(pt.value);
    y.push_back(r.eta_RO_crystal->value);
    s.push_back(r.eta_RO_crystal->sigma);
  }
  ctx.table("fig4a_decay.csv", t, base, trials);
  const auto fit = fit::fit_gaussian_decay(x, y, s);
  CsvTable f;
  f.columns = {"amplitude", "amplitude_sigma", "tau_us", "tau_sigma_us", "linewidth_kHz",
               "linewidth_sigma_kHz", "configured_linewidth_kHz"};
  f.add({fit.amplitude.value, fit.amplitude.sigma, fit.tau_us.value, fit.tau_us.sigma,
         fit.linewidth_kHz.value, fit.linewidth_kHz.sigma, base.spin_linewidth_kHz});
  ctx.table("fig4a_fit.csv", f, base, trials);
  ctx.result.values["tau_us"] = fit.tau_us;
  ctx.result.values["linewidth_kHz"] = fit.linewidth_kHz;
  ctx.result.values["amplitude"] = fit.amplitude;
  ctx.result.checks.push_back(in_band("fitted 1/e decay time (us)", fit.tau_us, 7.5, 9.1));
  ctx.result.checks.push_back(in_band("implied linewidth (kHz)", fit.linewidth_kHz, 43, 47));
}

void fig4c(Context& ctx, const ExperimentConfig& cfg, std::uint64_t trials) {
  constexpr std::int64_t kDeltaTauNs = 500;
  auto spec = AnalysisSpec::from_config(cfg);
  spec.stokes_cell_ns = kDeltaTauNs;
  const auto acc = simulate(ctx, cfg, std::nullopt, spec, trials, "fig4c_events.bin");
  const auto total_T = std::llround(cfg.stokes_window_us * 1e3);
  const auto center = find_peak_center(acc, kBinNs);
  const auto mm = multimode_analysis(acc, total_T, kDeltaTauNs, kWindowNs, center, cfg.trials_per_hour());
  CsvTable t;
  t.columns = {"window_T_us", "placements", "mean_coincidences", "coincidences_per_hour", "g2_cross",
               "g2_cross_sigma"};
  for (const auto& r : mm.rows) {
    t.add({static_cast<double>(r.window_ns) * 1e-3, static_cast<double>(r.placements),
           r.mean_coincidences, r.coincidences_per_hour, r.g2.value, r.g2.sigma});
  }
  ctx.table("fig4c_multimode.csv", t, cfg, trials,
            fmt::format("n_modes={} delta_tau_ns={} g2_slope_per_us={} g2_slope_sigma={} pearson_r={}",
                        mm.n_modes, kDeltaTauNs, mm.g2_slope_per_us.value, mm.g2_slope_per_us.sigma,
                        mm.coincidence_pearson_r));
  ReportOptions ro;
  ro.bin_ns = kBinNs;
  ro.window_ns = kWindowNs;
  ro.center_ns = center;
  ro.antistokes_transmission = cfg.antistokes_transmission;
  const auto report = analyze(acc, ro);
  ctx.write("fig4c_report.txt", ctx.header(cfg, trials).render() + format_report(report));

  auto& v = ctx.result.values;
  v["n_modes"] = {static_cast<double>(mm.n_modes), 0.0};
  v["pearson_r"] = {mm.coincidence_pearson_r, 0.0};
  v["g2_slope_per_us"] = mm.g2_slope_per_us;
  v["eta_RO_crystal"] = *report.eta_RO_crystal;
  v["g2_cross_full_window"] = report.g2_cross;
  auto& c = ctx.result.checks;
  c.push_back({"N_m = T / delta_tau", v["n_modes"], "== 11", mm.n_modes == 11});
  c.push_back({"coincidences vs T Pearson r", v["pearson_r"], "> 0.99", mm.coincidence_pearson_r > 0.99});
  const double z = mm.g2_slope_per_us.deviations_from(0.0);
  c.push_back({"g2 vs T slope (1/us)", mm.g2_slope_per_us, fmt::format("|slope| / sigma = {:.2f} <= 2", z),
               z <= 2.0});
}

}  // namespace

bool PresetResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const BandCheck& c) { return c.pass; });
}

std::string PresetResult::summary() const {
  std::string s = fmt::format("preset = {}\nseed = {}\ntrials_per_point = {}\n", preset, seed,
                              trials_per_point);
  for (const auto& [k, m] : values) s += fmt::format("{} = {:.6g} +/- {:.3g}\n", k, m.value, m.sigma);
  for (const auto& c : checks) {
    s += fmt::format("{} {}: {:.6g} +/- {:.3g} {}\n", c.pass ? "PASS" : "FAIL", c.name, c.value.value,
                     c.value.sigma, c.band);
  }
  s += fmt::format("result = {}\n", passed() ? "PASS" : "FAIL");
  return s;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"fig2c", "fig3b", "fig3c", "fig4a", "fig4c"};
  return names;
}

ExperimentConfig preset_config(std::string_view preset) {
  ExperimentConfig c = calibrated_config();
  if (preset == "fig2c" || preset == "fig3c" || preset == "fig4a") return c;
  if (preset == "fig3b") {
    c.splitter_stokes = true;
    c.splitter_antistokes = true;
    return c;
  }
  if (preset == "fig4c") {
    c.write_power_uW = 64.0;
    c.write_fwhm_ns = 500.0;
    c.coincidence_jitter_fwhm_ns = 480.0;
    c.stokes_window_us = 5.5;
    c.stokes_prob_per_uW *= 5.5 / 2.0;
    c.read_delay_us = 15.0;
    c.antistokes_gate_start_us = 0.2;
    c.antistokes_gate_end_us = 8.0;
    return c;
  }
  throw std::invalid_argument(fmt::format("unknown preset '{}' (fig2c, fig3b, fig3c, fig4a, fig4c)", preset));
}

std::uint64_t preset_default_trials(std::string_view preset) {
  if (preset == "fig2c") return 20'000'000;
  if (preset == "fig3b") return 400'000'000;
  if (preset == "fig3c") return 100'000'000;
  if (preset == "fig4a") return 200'000'000;
  if (preset == "fig4c") return 20'000'000;
  throw std::invalid_argument(fmt::format("unknown preset '{}'", preset));
}

PresetResult run_preset(std::string_view preset, const PresetOptions& options) {
  ExperimentConfig cfg = preset_config(preset);
  if (options.seed) cfg.rng_seed = *options.seed;
  require_valid(cfg);
  const std::uint64_t trials = options.trials ? *options.trials : preset_default_trials(preset);
  if (trials == 0) throw std::invalid_argument("trials must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(options.out_dir, ec);
  if (!std::filesystem::is_directory(options.out_dir)) {
    throw std::runtime_error(fmt::format("cannot create output directory '{}'", options.out_dir.string()));
  }

  Context ctx{std::string(preset), options, {}};
  ctx.result.preset = ctx.preset;
  ctx.result.seed = cfg.rng_seed;
  ctx.result.trials_per_point = trials;
  ctx.write(fmt::format("{}_config.cfg", preset), serialize_config(cfg));
  if (preset == "fig2c") fig2c(ctx, cfg, trials);
  else if (preset == "fig3b") fig3b(ctx, cfg, trials);
  else if (preset == "fig3c") fig3c(ctx, cfg, trials);
  else if (preset == "fig4a") fig4a(ctx, cfg, trials);
  else fig4c(ctx, cfg, trials);
  ctx.write(fmt::format("{}_summary.txt", preset), ctx.header(cfg, trials).render() + ctx.result.summary());
  return ctx.result;
}

}  // namespace dlcz
