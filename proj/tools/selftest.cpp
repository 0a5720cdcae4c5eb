#include "selftest.hpp"

#include <fmt/format.h>

#include <cmath>

#include "dlcz/analysis.hpp"
#include "dlcz/emission.hpp"
#include "dlcz/pipeline.hpp"
#include "dlcz_oracle/photon_number_oracle.hpp"

namespace dlcz::selftest {

namespace {

Measurement binomial(double k, double n) {
  const double p = k / n;
  return {p, std::sqrt(std::max(p * (1.0 - p), 1.0 / n) / n)};
}

CorrelationAccumulator run(const ExperimentConfig& cfg, std::uint64_t trials, unsigned threads) {
  PipelineOptions po;
  po.threads = threads;
  return simulate_and_accumulate(EmissionSimulator(cfg), AnalysisSpec::from_config(cfg), trials, po);
}

}  // namespace

ExperimentConfig oracle_config(const OracleCase& c, bool splitters) {
  ExperimentConfig cfg;
  cfg.write_power_uW = 1.0;
  cfg.stokes_prob_per_uW = 1.0 - std::pow(1.0 + c.mean_pairs, -c.modes);
  cfg.generation_mode_ns = cfg.stokes_window_us * 1e3 / c.modes;
  cfg.emission_jitter = false;
  cfg.coincidence_jitter_fwhm_ns = 0.0;
  cfg.stokes_transmission = 1.0;
  cfg.antistokes_transmission = 1.0;
  cfg.readout_budget.eta_RP = 1.0;
  cfg.readout_budget.eta_reph = c.retrieval;
  cfg.branching_ratio = 1.0;
  cfg.spin_linewidth_kHz = 1e-3;
  cfg.echo_leak_fraction = 0.0;
  cfg.dark_count_rate_hz = 0.0;
  cfg.uncorrelated_noise_fraction_s = 0.0;
  cfg.uncorrelated_noise_fraction_as = 0.0;
  cfg.splitter_stokes = splitters;
  cfg.splitter_antistokes = splitters;
  return cfg;
}

std::vector<Comparison> oracle_comparison(const OracleCase& c, std::uint64_t trials, std::uint64_t seed,
                                          unsigned threads) {
  std::vector<dlcz_oracle::PairMode> modes(static_cast<std::size_t>(c.modes),
                                           {c.mean_pairs, 1.0, c.retrieval});
  const auto exact = dlcz_oracle::click_statistics(modes);

  auto cfg = oracle_config(c, false);
  cfg.rng_seed = seed;
  const auto acc = run(cfg, trials, threads);
  const auto n = static_cast<double>(acc.n_trials());
  // A window spanning every possible sum time.
  const std::int64_t center = acc.sum_min_ns() + static_cast<std::int64_t>(acc.sum_bins() / 2);
  const auto wide = static_cast<std::int64_t>(acc.sum_bins()) + 2;
  const auto w = window_counts(acc, center, wide);

  std::vector<Comparison> out;
  out.push_back({"p_s", binomial(static_cast<double>(acc.channel_events(Channel::Stokes)), n), exact.p_s});
  out.push_back(
      {"p_as", binomial(static_cast<double>(acc.channel_events(Channel::AntiStokes)), n), exact.p_as});
  out.push_back({"p_s,as", binomial(w.same, n), exact.p_sas});
  out.push_back({"g2_s,as", g2_from_counts(w), exact.g2_cross()});
  out.push_back({"eta_RO", readout_efficiency(acc, center, wide), exact.eta_RO()});

  auto split = oracle_config(c, true);
  split.rng_seed = seed + 1;
  const auto sacc = run(split, trials, threads);
  const auto& s = sacc.spec().schedule;
  const std::int64_t auto_w = 2 * std::max(s.stokes_gate.length(), s.antistokes_gate.length()) + 2;
  out.push_back({"g2_ss", g2_auto(sacc, Channel::Stokes, auto_w), exact.g2_ss()});
  out.push_back({"g2_as,as", g2_auto(sacc, Channel::AntiStokes, auto_w), exact.g2_asas()});
  return out;
}

std::vector<ClassicalPoint> classical_R(const std::vector<double>& powers_uW, std::uint64_t trials,
                                        std::uint64_t seed, unsigned threads) {
  std::vector<ClassicalPoint> out;
  for (std::size_t i = 0; i < powers_uW.size(); ++i) {
    ExperimentConfig cfg = calibrated_config();
    cfg.source_model = SourceModel::IndependentPoisson;
    cfg.noise_statistics = NoiseStatistics::Poisson;
    cfg.splitter_stokes = true;
    cfg.splitter_antistokes = true;
    cfg.write_power_uW = powers_uW[i];
    cfg.rng_seed = seed + i;
    const auto acc = run(cfg, trials, threads);
    const auto center = std::llround(cfg.afc_delay_us * 1e3);
    const auto& s = acc.spec().schedule;
    const auto g = g2_cross(acc, center, 1000);
    const auto gss = g2_auto(acc, Channel::Stokes, 2 * s.stokes_gate.length() + 2);
    const auto gaa = g2_auto(acc, Channel::AntiStokes, 2 * s.antistokes_gate.length() + 2);
    out.push_back({powers_uW[i], cauchy_schwarz_R(g, gss, gaa)});
  }
  return out;
}

std::vector<Check> run_selftest(const SelftestOptions& o) {
  std::vector<Check> out;
  const auto near = [&](std::string name, double got, double want, double tol) {
    out.push_back({std::move(name), std::abs(got - want) <= tol,
                   fmt::format("{:.6g} vs {:.6g} (tol {:g})", got, want, tol)});
  };
  near("eta_write(5.4, 4.4)", afc::eta_write(5.4, 4.4), 0.707, 0.0005);
  near("eta_loss(0.4)", afc::eta_loss(0.4), 0.670, 0.0005);
  near("infer_eta_rephasing(0.17, 5.4, 4.4, 0.4)", afc::infer_eta_rephasing(0.17, 5.4, 4.4, 0.4), 0.359,
       0.005);
  const double r = 0.42;
  near("rephasing round trip",
       afc::infer_eta_rephasing(afc::eta_write(5.4, 4.4) * r * afc::eta_loss(0.4), 5.4, 4.4, 0.4), r, 1e-12);
  near("budget product", afc::readout_budget({0.40, 0.36, 0.60, 0.76}, 0.64), 0.042, 0.0005);
  near("eta_decoh(5.6 us, 45 kHz)", afc::eta_decoh(5.6, 45.0, o.decay_constant), 0.64, 0.01);
  const double tau = afc::decay_time_us(45.0, o.decay_constant);
  out.push_back({"decay time for 45 kHz within 8.3 +/- 0.8 us", std::abs(tau - 8.3) <= 0.8,
                 fmt::format("{:.4g} us", tau)});
  const double gamma = afc::linewidth_kHz(8.3, o.decay_constant);
  out.push_back({"linewidth for 8.3 us within 45 +/- 2 kHz", std::abs(gamma - 45.0) <= 2.0,
                 fmt::format("{:.4g} kHz", gamma)});

  for (double pbar : {0.01, 0.05, 0.2}) {
    try {
      for (const auto& c : oracle_comparison({pbar, 0.5, 1}, o.trials, o.seed, o.threads)) {
        out.push_back({fmt::format("oracle p={} {}", pbar, c.quantity), c.z() <= 3.0,
                       fmt::format("{:.6g} +/- {:.3g} vs exact {:.6g} ({:.2f} sigma)", c.measured.value,
                                   c.measured.sigma, c.exact, c.z())});
      }
    } catch (const std::exception& e) {
      out.push_back({fmt::format("oracle p={}", pbar), false, e.what()});
    }
  }
  try {
    for (const auto& p : classical_R(kClassicalPowers, o.classical_trials, o.seed, o.threads)) {
      out.push_back({fmt::format("classical R <= 1 at {} uW", p.write_power_uW),
                     p.R.value <= 1.0 + 3.0 * p.R.sigma,
                     fmt::format("R = {:.4g} +/- {:.3g}", p.R.value, p.R.sigma)});
    }
  } catch (const std::exception& e) {
    out.push_back({"classical R", false, e.what()});
  }
  return out;
}

}  // namespace dlcz::selftest
