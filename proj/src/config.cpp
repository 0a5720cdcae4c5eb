#include "dlcz/config.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace dlcz {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view key, std::string_view v) {
  // std::from_chars for double is available in libstdc++ 11.
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end || !std::isfinite(out)) {
    throw ConfigError(fmt::format("{}: expected a real number, got '{}'", key, v));
  }
  return out;
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view v) {
  Int out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError(fmt::format("{}: expected an integer, got '{}'", key, v));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(fmt::format("{}: expected true/false, got '{}'", key, v));
}

struct Field {
  std::string_view name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view key, std::string_view)> set;
};

#define DLCZ_REAL(member)                                                          \
  Field {                                                                          \
    #member, [](const ExperimentConfig& c) { return fmt::format("{}", c.member); }, \
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {          \
          c.member = parse_double(k, v);                                           \
        }                                                                          \
  }

#define DLCZ_BOOL(member)                                                               \
  Field {                                                                               \
    #member, [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }, \
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {               \
          c.member = parse_bool(k, v);                                                  \
        }                                                                               \
  }

#define DLCZ_BUDGET(member)                                                          \
  Field {                                                                            \
    #member, [](const ExperimentConfig& c) {                                         \
      return fmt::format("{}", c.readout_budget.member);                             \
    },                                                                               \
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {            \
          c.readout_budget.member = parse_double(k, v);                              \
        }                                                                            \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      DLCZ_REAL(write_power_uW),
      DLCZ_REAL(stokes_prob_per_uW),
      DLCZ_REAL(afc_delay_us),
      DLCZ_REAL(write_fwhm_ns),
      DLCZ_REAL(stokes_gate_offset_us),
      DLCZ_REAL(stokes_window_us),
      DLCZ_REAL(read_delay_us),
      DLCZ_REAL(trial_period_us),
      Field{"trials_per_prep",
            [](const ExperimentConfig& c) { return fmt::format("{}", c.trials_per_prep); },
            [](ExperimentConfig& c, std::string_view k, std::string_view v) {
              c.trials_per_prep = parse_int<std::int64_t>(k, v);
            }},
      DLCZ_BUDGET(eta_RP),
      DLCZ_BUDGET(eta_reph),
      DLCZ_BUDGET(beta_G),
      DLCZ_REAL(spin_linewidth_kHz),
      DLCZ_REAL(branching_ratio),
      DLCZ_REAL(stokes_transmission),
      DLCZ_REAL(antistokes_transmission),
      DLCZ_REAL(dark_count_rate_hz),
      DLCZ_REAL(echo_leak_fraction),
      DLCZ_REAL(echo_leak_time_us),
      DLCZ_REAL(echo_leak_fwhm_us),
      DLCZ_REAL(uncorrelated_noise_fraction_s),
      DLCZ_REAL(uncorrelated_noise_fraction_as),
      Field{"rng_seed", [](const ExperimentConfig& c) { return fmt::format("{}", c.rng_seed); },
            [](ExperimentConfig& c, std::string_view k, std::string_view v) {
              c.rng_seed = parse_int<std::uint64_t>(k, v);
            }},
      DLCZ_REAL(antistokes_gate_start_us),
      DLCZ_REAL(antistokes_gate_end_us),
      DLCZ_REAL(coincidence_jitter_fwhm_ns),
      DLCZ_REAL(generation_mode_ns),
      DLCZ_BOOL(emission_jitter),
      DLCZ_REAL(stokes_envelope_decay_us),
      DLCZ_REAL(noise_reference_power_uW),
      DLCZ_REAL(afc_prep_duration_ms),
      Field{"source_model",
            [](const ExperimentConfig& c) { return std::string(to_string(c.source_model)); },
            [](ExperimentConfig& c, std::string_view k, std::string_view v) {
              if (v == "thermal_pairs") {
                c.source_model = SourceModel::ThermalPairs;
              } else if (v == "independent_poisson") {
                c.source_model = SourceModel::IndependentPoisson;
              } else {
                throw ConfigError(fmt::format(
                    "{}: expected thermal_pairs or independent_poisson, got '{}'", k, v));
              }
            }},
      Field{"noise_statistics",
            [](const ExperimentConfig& c) { return std::string(to_string(c.noise_statistics)); },
            [](ExperimentConfig& c, std::string_view k, std::string_view v) {
              if (v == "thermal") {
                c.noise_statistics = NoiseStatistics::Thermal;
              } else if (v == "poisson") {
                c.noise_statistics = NoiseStatistics::Poisson;
              } else {
                throw ConfigError(fmt::format("{}: expected thermal or poisson, got '{}'", k, v));
              }
            }},
      DLCZ_BOOL(splitter_stokes),
      DLCZ_BOOL(splitter_antistokes),
  };
  return table;
}

#undef DLCZ_REAL
#undef DLCZ_BOOL
#undef DLCZ_BUDGET

void check_unit(std::vector<std::string>& out, std::string_view name, double v) {
  if (!(v >= 0.0 && v <= 1.0)) out.push_back(fmt::format("{} out of [0,1]", name));
}

void check_positive(std::vector<std::string>& out, std::string_view name, double v) {
  if (!(v > 0.0)) out.push_back(fmt::format("{} must be > 0", name));
}

void check_nonnegative(std::vector<std::string>& out, std::string_view name, double v) {
  if (!(v >= 0.0)) out.push_back(fmt::format("{} must be >= 0", name));
}

}  // namespace

double ExperimentConfig::trials_per_hour() const {
  const double per_trial_us =
      trial_period_us + afc_prep_duration_ms * 1e3 / static_cast<double>(trials_per_prep);
  return 3.6e9 / per_trial_us;
}

ExperimentConfig calibrated_config() {
  ExperimentConfig c;
  // Calibrated noise floor, not measured.
  c.uncorrelated_noise_fraction_s = 0.10;
  c.uncorrelated_noise_fraction_as = 0.91;
  c.dark_count_rate_hz = 50.0;
  return c;
}

std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> out;
  check_nonnegative(out, "write_power_uW", c.write_power_uW);
  check_nonnegative(out, "stokes_prob_per_uW", c.stokes_prob_per_uW);
  check_positive(out, "afc_delay_us", c.afc_delay_us);
  check_positive(out, "write_fwhm_ns", c.write_fwhm_ns);
  check_nonnegative(out, "stokes_gate_offset_us", c.stokes_gate_offset_us);
  check_positive(out, "stokes_window_us", c.stokes_window_us);
  check_positive(out, "read_delay_us", c.read_delay_us);
  check_positive(out, "trial_period_us", c.trial_period_us);
  if (c.trials_per_prep <= 0) out.emplace_back("trials_per_prep must be > 0");
  check_unit(out, "eta_RP", c.readout_budget.eta_RP);
  check_unit(out, "eta_reph", c.readout_budget.eta_reph);
  check_unit(out, "beta_G", c.readout_budget.beta_G);
  check_positive(out, "spin_linewidth_kHz", c.spin_linewidth_kHz);
  check_unit(out, "branching_ratio", c.branching_ratio);
  check_unit(out, "stokes_transmission", c.stokes_transmission);
  check_unit(out, "antistokes_transmission", c.antistokes_transmission);
  check_nonnegative(out, "dark_count_rate_hz", c.dark_count_rate_hz);
  check_unit(out, "echo_leak_fraction", c.echo_leak_fraction);
  if (c.echo_leak_fraction >= 1.0) out.emplace_back("echo_leak_fraction must be < 1");
  check_positive(out, "echo_leak_fwhm_us", c.echo_leak_fwhm_us);
  check_unit(out, "uncorrelated_noise_fraction_s", c.uncorrelated_noise_fraction_s);
  check_unit(out, "uncorrelated_noise_fraction_as", c.uncorrelated_noise_fraction_as);
  if (c.uncorrelated_noise_fraction_s >= 1.0) {
    out.emplace_back("uncorrelated_noise_fraction_s must be < 1");
  }
  if (c.uncorrelated_noise_fraction_as >= 1.0) {
    out.emplace_back("uncorrelated_noise_fraction_as must be < 1");
  }
  check_nonnegative(out, "coincidence_jitter_fwhm_ns", c.coincidence_jitter_fwhm_ns);
  check_nonnegative(out, "generation_mode_ns", c.generation_mode_ns);
  check_nonnegative(out, "stokes_envelope_decay_us", c.stokes_envelope_decay_us);
  check_nonnegative(out, "noise_reference_power_uW", c.noise_reference_power_uW);
  check_nonnegative(out, "afc_prep_duration_ms", c.afc_prep_duration_ms);
  if (!(c.antistokes_gate_end_us > c.antistokes_gate_start_us)) {
    out.emplace_back("antistokes gate must have end > start");
  }
  check_nonnegative(out, "antistokes_gate_start_us", c.antistokes_gate_start_us);

  const double gate_close = c.stokes_gate_offset_us + c.stokes_window_us;
  if (gate_close > c.read_delay_us) {
    out.push_back(fmt::format(
        "stokes gate overlaps read pulse: offset + window = {} us > read_delay_us = {} us",
        gate_close, c.read_delay_us));
  }
  if ((c.read_delay_us + c.antistokes_gate_end_us) > c.trial_period_us) {
    out.emplace_back("antistokes gate extends past trial_period_us");
  }
  if (c.generation_mode_width_ns() > c.stokes_window_us * 1e3) {
    out.emplace_back("generation mode wider than stokes_window_us");
  }
  if (!(c.stokes_probability() < 1.0)) {
    out.push_back(fmt::format("stokes probability P_s = {} must be < 1", c.stokes_probability()));
  }
  return out;
}

void require_valid(const ExperimentConfig& config) {
  auto violations = validate(config);
  if (violations.empty()) return;
  std::string msg = "invalid config:";
  for (const auto& v : violations) msg += "\n  " + v;
  throw ConfigError(std::move(msg), std::move(violations));
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("line {}: expected 'key = value'", line_no));
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Field& f) { return f.name == key; });
    if (it == table.end()) {
      throw ConfigError(fmt::format("line {}: unknown key '{}'", line_no, key));
    }
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError(fmt::format("line {}: duplicate key '{}'", line_no, key));
    }
    it->set(cfg, key, value);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : fields()) {
    out += fmt::format("{} = {}\n", f.name, f.get(config));
  }
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : serialize_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string_view to_string(SourceModel m) {
  switch (m) {
    case SourceModel::ThermalPairs: return "thermal_pairs";
    case SourceModel::IndependentPoisson: return "independent_poisson";
  }
  return "?";
}

std::string_view to_string(NoiseStatistics n) {
  switch (n) {
    case NoiseStatistics::Thermal: return "thermal";
    case NoiseStatistics::Poisson: return "poisson";
  }
  return "?";
}

}  // namespace dlcz
