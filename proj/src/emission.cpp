#include "dlcz/emission.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "dlcz/afc_memory.hpp"
#include "dlcz/rng.hpp"

namespace dlcz {

namespace {

constexpr double kFwhmToSigma = 0.42466090014400953;  // 1 / (2 sqrt(2 ln 2))

double normal_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 * 0.5); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
/// Antiderivative of the normal CDF.
double normal_cdf_integral(double y) { return y * normal_cdf(y) + normal_pdf(y); }

/// Probability that x = uniform[x1, x2) + N(0, sigma) lands in [a, b).
double smeared_window_probability(double x1, double x2, double sigma, double a, double b) {
  if (sigma <= 0.0) {
    const double lo = std::max(x1, a);
    const double hi = std::min(x2, b);
    return std::max(0.0, hi - lo) / (x2 - x1);
  }
  const auto part = [&](double edge) {
    return sigma * (normal_cdf_integral((edge - x1) / sigma) - normal_cdf_integral((edge - x2) / sigma));
  };
  return std::clamp((part(b) - part(a)) / (x2 - x1), 0.0, 1.0);
}

/// Average of f over the emission-time distribution of a mode.
template <typename F>
double mode_average(const EmissionMode& mode, double sigma, F&& f) {
  constexpr int kUniformNodes = 48;
  constexpr int kNormalNodes = 41;
  double acc = 0.0;
  double weight_sum = 0.0;
  for (int i = 0; i < kUniformNodes; ++i) {
    const double t0 = mode.start_ns + (i + 0.5) / kUniformNodes * mode.width_ns;
    if (sigma <= 0.0) {
      acc += f(t0);
      weight_sum += 1.0;
      continue;
    }
    for (int j = 0; j < kNormalNodes; ++j) {
      const double z = -5.0 + 10.0 * j / (kNormalNodes - 1);
      const double w = normal_pdf(z);
      acc += w * f(t0 + sigma * z);
      weight_sum += w;
    }
  }
  return acc / weight_sum;
}

/// Scale m such that a trial yields at least one detected Stokes photon with
/// probability p_s, given per-mode weights and detection probabilities.
double solve_brightness(SourceModel model, std::span<const double> weights,
                        std::span<const double> detect, double p_s) {
  if (p_s <= 0.0) return 0.0;
  const double target = -std::log1p(-p_s);
  double exposure = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) exposure += weights[i] * detect[i];
  if (!(exposure > 0.0)) {
    throw ConfigError("stokes probability > 0 but no emitted photon can reach the Stokes gate");
  }
  if (model == SourceModel::IndependentPoisson) return target / exposure;
  // Thermal: sum log(1 + m w_i q_i) = target, monotone in m.
  const auto f = [&](double m) {
    double s = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) s += std::log1p(m * weights[i] * detect[i]);
    return s - target;
  };
  double lo = 0.0;
  double hi = target / exposure;
  while (f(hi) < 0.0) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::uint64_t sample_thermal(double mean, double u_open0) {
  if (mean <= 0.0) return 0;
  const double r = mean / (1.0 + mean);
  return static_cast<std::uint64_t>(std::floor(std::log(u_open0) / std::log(r)));
}

/// Inverse-CDF Poisson sample; `floor_cdf` shifts the target for conditioning.
std::uint64_t poisson_from_target(double mean, double target, std::uint64_t k0) {
  double p = std::exp(-mean);
  double c = p;
  std::uint64_t k = 0;
  while (k < k0 || (c < target && k < 100000)) {
    ++k;
    p *= mean / static_cast<double>(k);
    c += p;
  }
  return k;
}

std::uint64_t sample_poisson(double mean, double u) {
  if (mean <= 0.0) return 0;
  return poisson_from_target(mean, u, 0);
}

std::uint64_t sample_poisson_nonzero(double mean, double u) {
  const double p0 = std::exp(-mean);
  return poisson_from_target(mean, p0 + u * (-std::expm1(-mean)), 1);
}

EmissionPlan build_plan(const ExperimentConfig& cfg, const NoiseLevels& noise) {
  EmissionPlan p;
  p.config = cfg;
  p.schedule = TrialSchedule::from_config(cfg);
  p.noise = noise;
  p.retrieval_base = cfg.readout_budget.eta_RP * cfg.readout_budget.eta_reph * cfg.branching_ratio;
  p.decay_time_ns = afc::decay_time_us(cfg.spin_linewidth_kHz) * 1e3;
  p.emission_sigma_ns = cfg.emission_jitter ? cfg.write_fwhm_ns * kFwhmToSigma : 0.0;
  p.pair_sigma_ns = cfg.coincidence_jitter_fwhm_ns * kFwhmToSigma;

  const Gate& sg = p.schedule.stokes_gate;
  const Gate& ag = p.schedule.antistokes_gate;
  const double width = cfg.generation_mode_width_ns();
  const auto n_modes =
      static_cast<std::size_t>(std::floor(static_cast<double>(sg.length()) / width + 1e-9));
  const double first = static_cast<double>(sg.start_ns) +
                       0.5 * (static_cast<double>(sg.length()) - static_cast<double>(n_modes) * width);

  std::vector<double> weights(n_modes, 1.0);
  std::vector<double> detect(n_modes, 0.0);
  if (cfg.stokes_envelope_decay_us > 0.0 && n_modes > 0) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n_modes; ++i) {
      const double centre = first + (static_cast<double>(i) + 0.5) * width - static_cast<double>(sg.start_ns);
      weights[i] = std::exp(-centre / (cfg.stokes_envelope_decay_us * 1e3));
      sum += weights[i];
    }
    for (auto& w : weights) w *= static_cast<double>(n_modes) / sum;
  }
  p.modes.resize(n_modes);
  for (std::size_t i = 0; i < n_modes; ++i) {
    auto& m = p.modes[i];
    m.start_ns = first + static_cast<double>(i) * width;
    m.width_ns = width;
    m.in_gate_probability =
        smeared_window_probability(m.start_ns, m.start_ns + width, p.emission_sigma_ns,
                                   static_cast<double>(sg.start_ns), static_cast<double>(sg.end_ns));
    detect[i] = cfg.stokes_transmission * m.in_gate_probability;
  }
  const double scale = solve_brightness(cfg.source_model, weights, detect, cfg.stokes_probability());

  const double read = static_cast<double>(p.schedule.read_t_ns);
  const double tau_afc = cfg.afc_delay_us * 1e3;
  double as_signal = 0.0;
  for (std::size_t i = 0; i < n_modes; ++i) {
    auto& m = p.modes[i];
    m.mean_photons = scale * weights[i];
    m.mean_retrieval = mode_average(m, p.emission_sigma_ns, [&](double t) { return p.retrieval_probability(t); });
    const double detected = mode_average(m, p.emission_sigma_ns, [&](double t) {
      const double centre = read + tau_afc - (t - static_cast<double>(p.schedule.write_t_ns));
      double in_gate = 0.0;
      if (p.pair_sigma_ns > 0.0) {
        in_gate = normal_cdf((static_cast<double>(ag.end_ns) - centre) / p.pair_sigma_ns) -
                  normal_cdf((static_cast<double>(ag.start_ns) - centre) / p.pair_sigma_ns);
      } else {
        in_gate = ag.contains(static_cast<std::int64_t>(std::floor(centre))) ? 1.0 : 0.0;
      }
      return p.retrieval_probability(t) * in_gate;
    });
    as_signal += m.mean_photons * detected * cfg.antistokes_transmission;
  }
  p.expected_antistokes_signal = as_signal;

  p.echo_mean = noise.echo_mean_per_uW * cfg.write_power_uW;
  p.echo_center_ns = read + cfg.echo_leak_time_us * 1e3;
  p.echo_sigma_ns = cfg.echo_leak_fwhm_us * 1e3 * kFwhmToSigma;
  p.dark_mean_stokes = cfg.dark_count_rate_hz * static_cast<double>(sg.length()) * 1e-9;
  p.dark_mean_antistokes = cfg.dark_count_rate_hz * static_cast<double>(ag.length()) * 1e-9;
  return p;
}

}  // namespace

double EmissionPlan::source_brightness() const {
  double s = 0.0;
  for (const auto& m : modes) s += m.mean_photons;
  return s;
}

double EmissionPlan::retrieval_probability(double emission_t_ns) const {
  const double storage = std::max(0.0, static_cast<double>(schedule.read_t_ns) - emission_t_ns);
  const double x = storage / decay_time_ns;
  return retrieval_base * std::exp(-x * x);
}

NoiseLevels resolve_noise(const ExperimentConfig& config) {
  require_valid(config);
  ExperimentConfig ref = config;
  ref.write_power_uW = config.noise_reference_power();
  require_valid(ref);
  const EmissionPlan p = build_plan(ref, NoiseLevels{});
  const double p_sig = ref.stokes_probability();
  const double fs = config.uncorrelated_noise_fraction_s;
  const double fas = config.uncorrelated_noise_fraction_as;
  NoiseLevels n;
  n.stokes_per_ns = p_sig * fs / (1.0 - fs) / static_cast<double>(p.schedule.stokes_gate.length());
  const double as_noise = p.expected_antistokes_signal * fas / (1.0 - fas);
  n.antistokes_per_ns = as_noise / static_cast<double>(p.schedule.antistokes_gate.length());
  const double fe = config.echo_leak_fraction;
  const double echo = fe / (1.0 - fe) * (p.expected_antistokes_signal + as_noise);
  n.echo_mean_per_uW = ref.write_power_uW > 0.0 ? echo / ref.write_power_uW : 0.0;
  return n;
}

EmissionPlan make_plan(const ExperimentConfig& config, std::optional<NoiseLevels> fixed_noise) {
  require_valid(config);
  return build_plan(config, fixed_noise ? *fixed_noise : resolve_noise(config));
}

EmissionSimulator::EmissionSimulator(const ExperimentConfig& config,
                                     std::optional<NoiseLevels> fixed_noise)
    : plan_(make_plan(config, fixed_noise)) {
  const auto& cfg = plan_.config;
  const bool thermal_noise = cfg.noise_statistics == NoiseStatistics::Thermal;
  const auto add = [&](Component c) {
    if (!(c.mean > 0.0)) return;
    c.zero_probability = c.thermal ? 1.0 / (1.0 + c.mean) : std::exp(-c.mean);
    components_.push_back(c);
  };
  for (std::uint32_t i = 0; i < plan_.modes.size(); ++i) {
    const auto& m = plan_.modes[i];
    if (cfg.source_model == SourceModel::ThermalPairs) {
      add({Kind::PairMode, true, 0, 0, i, m.mean_photons, 0.0, m.start_ns, m.width_ns});
    } else {
      add({Kind::StokesOnlyMode, false, 0, 0, i, m.mean_photons, 0.0, m.start_ns, m.width_ns});
      add({Kind::AntiStokesOnlyMode, false, 0, 0, i, m.mean_photons * m.mean_retrieval, 0.0,
           m.start_ns, m.width_ns});
    }
  }
  const auto add_cells = [&](Kind kind, const Gate& gate, double per_ns) {
    const double width = cfg.generation_mode_width_ns();
    std::uint32_t idx = 0;
    for (double s = static_cast<double>(gate.start_ns); s < static_cast<double>(gate.end_ns); s += width) {
      const double w = std::min(width, static_cast<double>(gate.end_ns) - s);
      add({kind, thermal_noise, 0, 0, idx++, per_ns * w, 0.0, s, w});
    }
  };
  add_cells(Kind::StokesNoise, plan_.schedule.stokes_gate, plan_.noise.stokes_per_ns);
  add_cells(Kind::AntiStokesNoise, plan_.schedule.antistokes_gate, plan_.noise.antistokes_per_ns);
  add({Kind::Echo, false, 0, 0, 0, plan_.echo_mean, 0.0, 0.0, 0.0});
  for (std::uint8_t d = 0; d < (cfg.splitter_stokes ? 2 : 1); ++d) {
    const auto& g = plan_.schedule.stokes_gate;
    add({Kind::Dark, false, 0, d, 0, plan_.dark_mean_stokes, 0.0, static_cast<double>(g.start_ns),
         static_cast<double>(g.length())});
  }
  for (std::uint8_t d = 0; d < (cfg.splitter_antistokes ? 2 : 1); ++d) {
    const auto& g = plan_.schedule.antistokes_gate;
    add({Kind::Dark, false, 1, d, 0, plan_.dark_mean_antistokes, 0.0,
         static_cast<double>(g.start_ns), static_cast<double>(g.length())});
  }
  suffix_zero_.assign(components_.size() + 1, 1.0);
  for (std::size_t k = components_.size(); k-- > 0;) {
    suffix_zero_[k] = suffix_zero_[k + 1] * components_[k].zero_probability;
  }
  suffix_zero_.pop_back();
}

void EmissionSimulator::simulate_trial(std::uint64_t trial, std::vector<DetectionEvent>& out) const {
  if (components_.empty()) return;
  const auto& cfg = plan_.config;
  TrialRng rng(cfg.rng_seed, trial);
  if (rng.uniform() < suffix_zero_.front()) return;

  constexpr double kNever = std::numeric_limits<double>::infinity();
  std::array<std::array<double, 2>, 2> first_click{{{kNever, kNever}, {kNever, kNever}}};
  const Gate& sg = plan_.schedule.stokes_gate;
  const Gate& ag = plan_.schedule.antistokes_gate;
  const double read = static_cast<double>(plan_.schedule.read_t_ns);
  const double write = static_cast<double>(plan_.schedule.write_t_ns);
  const double tau_afc = cfg.afc_delay_us * 1e3;

  const auto in_gate = [](const Gate& g, double t) {
    return t >= static_cast<double>(g.start_ns) && t < static_cast<double>(g.end_ns);
  };
  const auto click = [&](int channel, double t) {
    const bool split = channel == 0 ? cfg.splitter_stokes : cfg.splitter_antistokes;
    const int det = split && rng.uniform() >= 0.5 ? 1 : 0;
    auto& slot = first_click[channel][det];
    slot = std::min(slot, t);
  };
  const auto emission_time = [&](const Component& c) {
    double t = c.cell_start_ns + rng.uniform() * c.cell_width_ns;
    if (plan_.emission_sigma_ns > 0.0) t += plan_.emission_sigma_ns * rng.normal();
    return t;
  };
  const auto antistokes_photon = [&](double emission_t) {
    double t = read + tau_afc - (emission_t - write);
    if (plan_.pair_sigma_ns > 0.0) t += plan_.pair_sigma_ns * rng.normal();
    if (rng.uniform() < cfg.antistokes_transmission && in_gate(ag, t)) click(1, t);
  };

  bool found = false;
  const std::size_t last = components_.size() - 1;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const Component& c = components_[k];
    std::uint64_t n = 0;
    if (!found) {
      const double p_here =
          k == last ? 1.0 : (1.0 - c.zero_probability) / (1.0 - suffix_zero_[k]);
      if (rng.uniform() >= p_here) continue;
      found = true;
      n = c.thermal ? 1 + sample_thermal(c.mean, rng.uniform_open0())
                    : sample_poisson_nonzero(c.mean, rng.uniform());
    } else {
      n = c.thermal ? sample_thermal(c.mean, rng.uniform_open0()) : sample_poisson(c.mean, rng.uniform());
    }
    for (std::uint64_t j = 0; j < n; ++j) {
      switch (c.kind) {
        case Kind::PairMode: {
          const double t = emission_time(c);
          if (rng.uniform() < cfg.stokes_transmission && in_gate(sg, t)) click(0, t);
          if (rng.uniform() < plan_.retrieval_probability(t)) antistokes_photon(t);
          break;
        }
        case Kind::StokesOnlyMode: {
          const double t = emission_time(c);
          if (rng.uniform() < cfg.stokes_transmission && in_gate(sg, t)) click(0, t);
          break;
        }
        case Kind::AntiStokesOnlyMode:
          antistokes_photon(emission_time(c));
          break;
        case Kind::StokesNoise:
          click(0, c.cell_start_ns + rng.uniform() * c.cell_width_ns);
          break;
        case Kind::AntiStokesNoise:
          click(1, c.cell_start_ns + rng.uniform() * c.cell_width_ns);
          break;
        case Kind::Echo: {
          const double t = plan_.echo_center_ns + plan_.echo_sigma_ns * rng.normal();
          if (in_gate(ag, t)) click(1, t);
          break;
        }
        case Kind::Dark: {
          const double t = c.cell_start_ns + rng.uniform() * c.cell_width_ns;
          auto& slot = first_click[c.channel][c.detector];
          slot = std::min(slot, t);
          break;
        }
      }
    }
  }

  const auto begin = out.size();
  for (int ch = 0; ch < 2; ++ch) {
    for (int det = 0; det < 2; ++det) {
      const double t = first_click[ch][det];
      if (t == kNever) continue;
      DetectionEvent e;
      e.trial_id = trial;
      e.channel = static_cast<Channel>(ch);
      e.detector_id = static_cast<std::uint8_t>(det);
      e.t_ns = static_cast<std::uint32_t>(std::floor(t));
      out.push_back(e);
    }
  }
  std::sort(out.begin() + static_cast<std::ptrdiff_t>(begin), out.end(), event_less);
}

void run_trials(const EmissionSimulator& sim, std::uint64_t n_trials, const EventSink& sink,
                const RunOptions& options) {
  const unsigned threads = std::max(1U, options.threads);
  const std::uint64_t chunk = std::max<std::uint64_t>(1, options.chunk_trials);
  const std::uint64_t end = options.first_trial + n_trials;
  std::vector<std::vector<DetectionEvent>> buffers(threads);
  const auto fill = [&](unsigned slot, std::uint64_t from, std::uint64_t to) {
    auto& buf = buffers[slot];
    buf.clear();
    for (std::uint64_t t = from; t < to; ++t) sim.simulate_trial(t, buf);
  };
  for (std::uint64_t pos = options.first_trial; pos < end; pos += chunk * threads) {
    unsigned used = 0;
    if (threads == 1) {
      fill(0, pos, std::min(pos + chunk, end));
      used = 1;
    } else {
      std::vector<std::jthread> workers;
      for (unsigned t = 0; t < threads; ++t) {
        const std::uint64_t from = pos + t * chunk;
        if (from >= end) break;
        workers.emplace_back(fill, t, from, std::min(from + chunk, end));
        ++used;
      }
    }
    for (unsigned t = 0; t < used; ++t) sink(buffers[t]);
  }
}

std::vector<DetectionEvent> run_trials(const ExperimentConfig& config, std::uint64_t n_trials,
                                       const RunOptions& options) {
  const EmissionSimulator sim(config);
  std::vector<DetectionEvent> all;
  run_trials(sim, n_trials, [&](std::span<const DetectionEvent> ev) {
    all.insert(all.end(), ev.begin(), ev.end());
  }, options);
  return all;
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::WritePower: return "write_power";
    case SweepAxis::StorageTime: return "storage_time";
    case SweepAxis::WindowT: return "window_T";
  }
  return "?";
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "write_power") return SweepAxis::WritePower;
  if (name == "storage_time") return SweepAxis::StorageTime;
  if (name == "window_T") return SweepAxis::WindowT;
  throw std::invalid_argument(
      fmt::format("unknown sweep axis '{}' (write_power, storage_time, window_T)", name));
}

std::vector<DetectionEvent> SweepPoint::events(unsigned threads) const {
  RunOptions opt;
  opt.threads = threads;
  const EmissionSimulator sim = simulator();
  std::vector<DetectionEvent> all;
  run_trials(sim, n_trials, [&](std::span<const DetectionEvent> ev) {
    all.insert(all.end(), ev.begin(), ev.end());
  }, opt);
  return all;
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& config, SweepAxis axis,
                                  std::span<const double> values, std::uint64_t n_trials) {
  if (values.empty()) throw std::invalid_argument("run_sweep: empty value list");
  if (n_trials == 0) throw std::invalid_argument("run_sweep: n_trials must be >= 1");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0)) throw std::invalid_argument("run_sweep: values must be positive");
    if (i > 0 && !(values[i] > values[i - 1])) {
      throw std::invalid_argument("run_sweep: values must be sorted ascending");
    }
  }
  const NoiseLevels noise = resolve_noise(config);
  std::vector<SweepPoint> points;
  points.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    SweepPoint pt;
    pt.value = values[i];
    pt.config = config;
    pt.noise = noise;
    pt.n_trials = n_trials;
    auto& c = pt.config;
    switch (axis) {
      case SweepAxis::WritePower:
        c.write_power_uW = values[i];
        break;
      case SweepAxis::StorageTime:
        c.read_delay_us = values[i] + c.stokes_gate_offset_us + 0.5 * c.stokes_window_us;
        break;
      case SweepAxis::WindowT:
        c.stokes_prob_per_uW *= values[i] / config.stokes_window_us;
        c.stokes_window_us = values[i];
        break;
    }
    c.rng_seed = derive_seed(config.rng_seed, i + 1);
    require_valid(c);
    points.push_back(std::move(pt));
  }
  return points;
}

}  // namespace dlcz
