#include <CLI11.hpp>
#include <fmt/format.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dlcz/afc_memory.hpp"
#include "dlcz/analysis.hpp"
#include "dlcz/config.hpp"
#include "dlcz/csv.hpp"
#include "dlcz/emission.hpp"
#include "dlcz/events.hpp"
#include "dlcz/fitting.hpp"
#include "dlcz/pipeline.hpp"
#include "dlcz/presets.hpp"
#include "dlcz/version.hpp"
#include "selftest.hpp"

namespace {

using namespace dlcz;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitBands = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kCsvHelp = R"(CSV outputs (all start with '#' lines: tool, version, seed, config hash, trials):
  report row   (--sweep-out, sweep --out):
               value,n_trials,center_ns,p_s,p_as,p_coinc,p_coinc_accidental,g2_cross,g2_cross_sigma,
               eta_RO,eta_RO_sigma,eta_RO_crystal,eta_RO_crystal_sigma,g2_ss,g2_ss_sigma,g2_asas,
               g2_asas_sigma,R,R_sigma   (auto-correlation columns are empty without --auto)
  histogram    (--hist-out): sum_time_us,same_trial,accidental_mean,subtracted
  offsets      (--offsets-out): trial_offset,separation_us,coincidences,coincidences_per_hour
  time profile (--times-out prefix): <prefix>_stokes.csv t_after_write_us,counts and
               <prefix>_antistokes.csv t_after_read_us,counts
Event files: text `trial_id,channel,detector_id,t_ns` with channel S/AS, or 16-byte
little-endian records (u64 trial, u32 t_ns, u8 channel, u8 detector, u16 0) when the
path ends in .bin; binary files get a `.meta` sidecar holding the header.)";

struct ConfigSource {
  std::string path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* app) {
    app->add_option("--config", path, "Config file (flat key = value); calibrated defaults when omitted")
        ->check(CLI::ExistingFile);
    app->add_option("--set", overrides, "Override one config key, e.g. --set write_power_uW=64");
    app->add_option("--seed", seed, "RNG seed (overrides rng_seed)");
  }

  [[nodiscard]] ExperimentConfig load() const {
    std::string text = path.empty() ? serialize_config(calibrated_config()) : [&] {
      std::ifstream f(path);
      std::stringstream ss;
      ss << f.rdbuf();
      return serialize_config(parse_config(ss.str()));
    }();
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw UsageError(fmt::format("--set expects key=value, got '{}'", o));
      std::string key = o.substr(0, eq);
      key.erase(0, key.find_first_not_of(" \t"));
      key.erase(key.find_last_not_of(" \t") + 1);
      std::string kept;
      std::istringstream lines(text);
      for (std::string line; std::getline(lines, line);) {
        const auto k = line.substr(0, line.find('='));
        const auto trimmed = k.substr(0, k.find_last_not_of(" \t") + 1);
        if (trimmed != key) kept += line + "\n";
      }
      text = kept + key + " = " + o.substr(eq + 1) + "\n";
    }
    ExperimentConfig cfg = parse_config(text);
    if (seed) cfg.rng_seed = *seed;
    require_valid(cfg);
    return cfg;
  }
};

OutputHeader header_for(const ExperimentConfig& cfg, std::uint64_t trials, std::string extra = {}) {
  OutputHeader h;
  h.seed = cfg.rng_seed;
  h.config_hash = config_hash(cfg);
  h.extra = fmt::format("trials={}", trials);
  if (!extra.empty()) h.extra += "\n" + extra;
  return h;
}

std::optional<std::uint64_t> trials_from_header(const std::string& path) {
  const std::string source = format_for_path(path) == EventFileFormat::Binary ? path + ".meta" : path;
  std::ifstream f(source);
  for (std::string line; std::getline(f, line) && !line.empty() && line.front() == '#';) {
    const auto pos = line.find("trials=");
    if (pos == std::string::npos) continue;
    std::uint64_t n = 0;
    const char* b = line.data() + pos + 7;
    if (std::from_chars(b, line.data() + line.size(), n).ec == std::errc{}) return n;
  }
  return std::nullopt;
}

std::vector<std::string> report_columns() {
  return {"value",     "n_trials",       "center_ns",      "p_s",      "p_as",  "p_coinc",
          "p_coinc_accidental", "g2_cross", "g2_cross_sigma", "eta_RO",   "eta_RO_sigma",
          "eta_RO_crystal", "eta_RO_crystal_sigma", "g2_ss", "g2_ss_sigma", "g2_asas", "g2_asas_sigma",
          "R", "R_sigma"};
}

std::string report_row(double value, const CorrelationReport& r) {
  const auto opt = [](const std::optional<Measurement>& m, bool sigma) {
    return m ? fmt::format("{}", sigma ? m->sigma : m->value) : std::string{};
  };
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", value, r.n_trials,
                     r.center_ns, r.p_s, r.p_as, r.p_coinc, r.p_coinc_accidental, r.g2_cross.value,
                     r.g2_cross.sigma, r.eta_RO.value, r.eta_RO.sigma, opt(r.eta_RO_crystal, false),
                     opt(r.eta_RO_crystal, true), opt(r.g2_ss, false), opt(r.g2_ss, true),
                     opt(r.g2_asas, false), opt(r.g2_asas, true), opt(r.R, false), opt(r.R, true));
}

struct AnalysisFlags {
  std::int64_t bin_ns = 400;
  std::int64_t window_ns = 1000;
  std::optional<std::int64_t> center_ns;
  bool include_auto = false;
  std::int64_t auto_window_ns = 1000;

  void add_to(CLI::App* app) {
    app->add_option("--bin-ns", bin_ns, "Histogram bin width (ns)")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--window-ns", window_ns, "Coincidence window around the peak (ns)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--center-ns", center_ns, "Window centre in T_s + T_as (ns); default: peak bin near tau_AFC");
    app->add_flag("--auto", include_auto, "Also compute g2_ss, g2_as,as and R (needs splitter data)");
    app->add_option("--auto-window-ns", auto_window_ns, "Auto-correlation window (ns)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
  }

  [[nodiscard]] ReportOptions options(const ExperimentConfig& cfg) const {
    ReportOptions o;
    o.bin_ns = bin_ns;
    o.window_ns = window_ns;
    o.center_ns = center_ns;
    o.include_auto = include_auto;
    o.auto_window_ns = auto_window_ns;
    o.antistokes_transmission = cfg.antistokes_transmission;
    o.trials_per_hour = cfg.trials_per_hour();
    return o;
  }
};

int cmd_simulate(const ConfigSource& src, std::uint64_t trials, const std::string& out, unsigned threads) {
  const auto cfg = src.load();
  const auto header = header_for(cfg, trials);
  const auto format = format_for_path(out);
  std::ofstream f(out, format == EventFileFormat::Binary ? std::ios::binary : std::ios::out);
  if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", out));
  EventWriter writer(f, format, header);
  RunOptions ro;
  ro.threads = threads;
  run_trials(EmissionSimulator(cfg), trials, [&](std::span<const DetectionEvent> ev) { writer.write(ev); }, ro);
  f.flush();
  if (!f) throw std::runtime_error(fmt::format("write failed for '{}'", out));
  if (format == EventFileFormat::Binary) write_text_file(out + ".meta", header.render());
  fmt::print(stderr, "{} events from {} trials written to {}\n", writer.count(), trials, out);
  return kExitOk;
}

struct AnalyzeOutputs {
  std::string report;
  std::string json;
  std::string hist;
  std::string offsets;
  std::string times;
  std::string sweep;
  double sweep_value = 0.0;
};

int cmd_analyze(const ConfigSource& src, const std::string& events_path, std::optional<std::uint64_t> trials,
                const AnalysisFlags& flags, const AnalyzeOutputs& out) {
  const auto cfg = src.load();
  const auto events = read_event_file(events_path);
  std::uint64_t n = 0;
  if (trials) {
    n = *trials;
  } else if (auto h = trials_from_header(events_path)) {
    n = *h;
  } else {
    n = events.empty() ? 0 : events.back().trial_id + 1;
    fmt::print(stderr, "warning: trial count not recorded; using max trial_id + 1 = {}\n", n);
  }
  if (!events.empty() && events.back().trial_id >= n) {
    throw UsageError(fmt::format("events reference trial {} but only {} trials were declared",
                                 events.back().trial_id, n));
  }
  const auto spec = AnalysisSpec::from_config(cfg);
  const auto acc = accumulate(events, spec, n);
  const auto report = analyze(acc, flags.options(cfg));
  const auto header = header_for(cfg, n, fmt::format("events={}", events_path));

  const std::string text = header.render() + format_report(report);
  if (out.report.empty()) fmt::print("{}", text);
  else write_text_file(out.report, text);
  if (!out.json.empty()) write_text_file(out.json, report_json(report) + "\n");
  if (!out.hist.empty()) {
    const auto h = coincidence_histogram(acc, flags.bin_ns);
    CsvTable t;
    t.columns = {"sum_time_us", "same_trial", "accidental_mean", "subtracted"};
    for (std::size_t i = 0; i < h.same_trial.counts.size(); ++i) {
      t.add({h.same_trial.centers_ns[i] * 1e-3, h.same_trial.counts[i], h.accidental_mean.counts[i],
             h.same_trial.counts[i] - h.accidental_mean.counts[i]});
    }
    write_text_file(out.hist, t.render(header));
  }
  if (!out.offsets.empty()) {
    CsvTable t;
    t.columns = {"trial_offset", "separation_us", "coincidences", "coincidences_per_hour"};
    for (const auto& o : coincidences_by_offset(acc, report.center_ns, flags.window_ns, cfg.trials_per_hour())) {
      t.add({static_cast<double>(o.offset), o.offset * cfg.trial_period_us, o.coincidences, o.per_hour});
    }
    write_text_file(out.offsets, t.render(header));
  }
  if (!out.times.empty()) {
    const auto h = coincidence_histogram(acc, flags.bin_ns);
    for (const auto& [suffix, hist, col] :
         {std::tuple{"_stokes.csv", &h.stokes_times, "t_after_write_us"},
          std::tuple{"_antistokes.csv", &h.antistokes_times, "t_after_read_us"}}) {
      CsvTable t;
      t.columns = {col, "counts"};
      for (std::size_t i = 0; i < hist->counts.size(); ++i) t.add({hist->centers_ns[i] * 1e-3, hist->counts[i]});
      write_text_file(out.times + suffix, t.render(header));
    }
  }
  if (!out.sweep.empty()) {
    const bool fresh = !std::filesystem::exists(out.sweep) || std::filesystem::file_size(out.sweep) == 0;
    std::ofstream f(out.sweep, std::ios::app);
    if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", out.sweep));
    if (fresh) f << header.render() << fmt::format("{}\n", fmt::join(report_columns(), ","));
    f << report_row(out.sweep_value, report);
  }
  return kExitOk;
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> v;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    double x = 0;
    const auto* b = item.data();
    while (*b == ' ') ++b;
    const auto [p, ec] = std::from_chars(b, item.data() + item.size(), x);
    if (ec != std::errc{} || p != item.data() + item.size()) {
      throw UsageError(fmt::format("bad number '{}' in --values", item));
    }
    v.push_back(x);
  }
  return v;
}

int cmd_sweep(const ConfigSource& src, const std::string& axis_name, const std::string& values_list,
              std::uint64_t trials, const std::string& out, unsigned threads, const AnalysisFlags& flags) {
  const auto cfg = src.load();
  const SweepAxis axis = parse_sweep_axis(axis_name);
  const auto values = parse_values(values_list);
  const auto points = run_sweep(cfg, axis, values, trials);
  std::string csv = header_for(cfg, trials, fmt::format("axis={}", axis_name)).render();
  csv += fmt::format("{}\n", fmt::join(report_columns(), ","));
  std::vector<double> x, y, s, ps, ps_sig;
  for (const auto& pt : points) {
    const auto spec = AnalysisSpec::from_config(pt.config);
    PipelineOptions po;
    po.threads = threads;
    const auto acc = simulate_and_accumulate(pt.simulator(), spec, trials, po);
    const auto r = analyze(acc, flags.options(pt.config));
    csv += report_row(pt.value, r);
    x.push_back(pt.value);
    y.push_back(r.eta_RO_crystal->value);
    s.push_back(std::max(r.eta_RO_crystal->sigma, 1e-300));
    const double p = static_cast<double>(acc.channel_events(Channel::Stokes)) / static_cast<double>(trials);
    ps.push_back(p);
    ps_sig.push_back(std::sqrt(std::max(p * (1 - p), 1.0 / trials) / static_cast<double>(trials)));
    fmt::print(stderr, "{} = {}: g2_cross = {:.4g} +/- {:.2g}, eta_RO = {:.4g}\n", axis_name, pt.value,
               r.g2_cross.value, r.g2_cross.sigma, r.eta_RO.value);
  }
  write_text_file(out, csv);
  if (axis == SweepAxis::StorageTime && x.size() >= 3) {
    const auto fit = fit::fit_gaussian_decay(x, y, s);
    fmt::print("tau_us = {:.6g} +/- {:.3g}\nlinewidth_kHz = {:.6g} +/- {:.3g}\n", fit.tau_us.value,
               fit.tau_us.sigma, fit.linewidth_kHz.value, fit.linewidth_kHz.sigma);
  } else if (axis == SweepAxis::WritePower && x.size() >= 2) {
    const auto fit = fit::fit_linear(x, ps, ps_sig);
    const double a = fit.intercept.value;
    fmt::print("stokes_slope_per_uW = {:.6g} +/- {:.3g}\nnoise_floor = {:.6g}\n", fit.slope.value / (1 - a),
               fit.slope.sigma / (1 - a), a);
  }
  return kExitOk;
}

int cmd_budget(const ConfigSource& src, std::optional<double> eta_decoh_override, const std::vector<double>& factors) {
  auto cfg = src.load();
  afc::BudgetTable t;
  if (!factors.empty()) {
    if (factors.size() != 5) throw UsageError("--factors expects eta_RP,eta_reph,eta_decoh,beta_BR,beta_G");
    t = afc::budget_table(EfficiencyBudget{factors[0], factors[1], factors[3], factors[4]}, factors[2]);
  } else if (eta_decoh_override) {
    t = afc::budget_table(cfg.budget(), *eta_decoh_override);
  } else {
    t = afc::budget_table(cfg);
  }
  fmt::print("{}", afc::format_budget(t));
  const AFCParams afc_params;
  fmt::print("eta_write  = {:.4f}   1 - exp(-d/F), d = {}, F = {}\n", afc::eta_write(afc_params.d, afc_params.F),
             afc_params.d, afc_params.F);
  fmt::print("eta_loss   = {:.4f}   exp(-d0), d0 = {}\n", afc::eta_loss(afc_params.d0), afc_params.d0);
  if (afc_params.eta_AFC_measured) {
    fmt::print("eta_rephasing = {:.4f}   eta_AFC / (eta_write * eta_loss), eta_AFC = {}\n",
               afc::infer_eta_rephasing(afc_params), *afc_params.eta_AFC_measured);
  }
  fmt::print("square_comb_dephasing = {:.4f}   diagnostic, F = {}\n", afc::square_comb_dephasing(afc_params.F),
             afc_params.F);
  return kExitOk;
}

int cmd_reproduce(const std::string& preset, const PresetOptions& options) {
  const auto result = run_preset(preset, options);
  fmt::print("{}", result.summary());
  return result.passed() ? kExitOk : kExitBands;
}

int cmd_selftest(const selftest::SelftestOptions& options) {
  const auto checks = selftest::run_selftest(options);
  bool ok = true;
  for (const auto& c : checks) {
    fmt::print("{} {}: {}\n", c.pass ? "PASS" : "FAIL", c.name, c.detail);
    ok = ok && c.pass;
  }
  fmt::print("selftest {}\n", ok ? "passed" : "FAILED");
  return ok ? kExitOk : kExitBands;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{fmt::format("{} {}: DLCZ photon-pair Monte-Carlo simulator and coincidence analysis",
                           kToolName, kToolVersion)};
  app.require_subcommand(1);
  app.footer(kCsvHelp);
  app.set_version_flag("--version", std::string(kToolVersion));
  unsigned threads = 1;

  auto* sim = app.add_subcommand("simulate", "Generate a detection-event stream");
  ConfigSource sim_src;
  sim_src.add_to(sim);
  std::uint64_t sim_trials = 0;
  std::string sim_out;
  sim->add_option("--trials", sim_trials, "Number of trials")->required()->check(CLI::PositiveNumber);
  sim->add_option("--out", sim_out, "Event file (.bin for binary)")->required();
  sim->add_option("--threads", threads, "Worker threads")->capture_default_str();

  auto* ana = app.add_subcommand("analyze", "Correlation analysis of an event file");
  ConfigSource ana_src;
  ana_src.add_to(ana);
  std::string events_path;
  std::optional<std::uint64_t> ana_trials;
  AnalysisFlags ana_flags;
  AnalyzeOutputs ana_out;
  ana->add_option("--events", events_path, "Event file")->required()->check(CLI::ExistingFile);
  ana->add_option("--trials", ana_trials, "Trials covered by the file (default: from its header)");
  ana_flags.add_to(ana);
  ana->add_option("--out", ana_out.report, "Key-value report (default: stdout)");
  ana->add_option("--json", ana_out.json, "Machine-readable report");
  ana->add_option("--hist-out", ana_out.hist, "Coincidence histogram CSV");
  ana->add_option("--offsets-out", ana_out.offsets, "Coincidences per trial offset CSV");
  ana->add_option("--times-out", ana_out.times, "Prefix for per-channel time histogram CSVs");
  ana->add_option("--sweep-out", ana_out.sweep, "Append the report as one row of a sweep CSV");
  ana->add_option("--sweep-value", ana_out.sweep_value, "Value written in the sweep row's first column");

  auto* swp = app.add_subcommand("sweep", "Simulate and analyse a parameter sweep");
  ConfigSource swp_src;
  swp_src.add_to(swp);
  std::string axis = "write_power";
  std::string values;
  std::uint64_t swp_trials = 0;
  std::string swp_out;
  AnalysisFlags swp_flags;
  swp->add_option("--axis", axis, "write_power | storage_time | window_T")->capture_default_str();
  swp->add_option("--values", values, "Comma-separated ascending positive values")->required();
  swp->add_option("--trials", swp_trials, "Trials per value")->required()->check(CLI::PositiveNumber);
  swp->add_option("--out", swp_out, "Sweep CSV")->required();
  swp->add_option("--threads", threads, "Worker threads")->capture_default_str();
  swp_flags.add_to(swp);

  auto* bud = app.add_subcommand("budget", "Expected read-out efficiency budget and AFC decomposition");
  ConfigSource bud_src;
  bud_src.add_to(bud);
  std::optional<double> eta_decoh;
  std::vector<double> factors;
  bud->add_option("--eta-decoh", eta_decoh, "Use this eta_decoh instead of the config's mean storage time");
  bud->add_option("--factors", factors, "eta_RP,eta_reph,eta_decoh,beta_BR,beta_G")->delimiter(',');

  auto* rep = app.add_subcommand("reproduce", "Run a figure preset and check its acceptance bands");
  std::string preset;
  PresetOptions preset_opts;
  std::string out_dir = ".";
  std::optional<std::uint64_t> rep_trials, rep_seed;
  rep->add_option("preset", preset, "fig2c | fig3b | fig3c | fig4a | fig4c")
      ->required()
      ->check(CLI::IsMember(preset_names()));
  rep->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
  rep->add_option("--trials", rep_trials, "Trials per simulated point (default: preset value)");
  rep->add_option("--seed", rep_seed, "RNG seed");
  rep->add_option("--threads", threads, "Worker threads")->capture_default_str();
  rep->add_flag("--write-events", preset_opts.write_events, "Also write binary event files");

  auto* st = app.add_subcommand("selftest", "Oracle equivalence and analytic identities");
  selftest::SelftestOptions st_opts;
  st->add_option("--trials", st_opts.trials, "Trials per oracle case")->capture_default_str();
  st->add_option("--classical-trials", st_opts.classical_trials, "Trials per classical-substitute point")
      ->capture_default_str();
  st->add_option("--seed", st_opts.seed, "RNG seed")->capture_default_str();
  st->add_option("--threads", threads, "Worker threads")->capture_default_str();
  st->add_option("--inject-decay-constant", st_opts.decay_constant,
                 "Test hook: replace the decay/linewidth conversion constant")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(sim_src, sim_trials, sim_out, threads);
    if (*ana) return cmd_analyze(ana_src, events_path, ana_trials, ana_flags, ana_out);
    if (*swp) return cmd_sweep(swp_src, axis, values, swp_trials, swp_out, threads, swp_flags);
    if (*bud) return cmd_budget(bud_src, eta_decoh, factors);
    if (*rep) {
      preset_opts.out_dir = out_dir;
      preset_opts.trials = rep_trials;
      preset_opts.seed = rep_seed;
      preset_opts.threads = threads;
      return cmd_reproduce(preset, preset_opts);
    }
    if (*st) {
      st_opts.threads = threads;
      return cmd_selftest(st_opts);
    }
  } catch (const ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitValidation;
  } catch (const afc::DomainError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
