#include <doctest.h>

#include <cmath>
#include <map>
#include <tuple>

#include "dlcz/analysis.hpp"
#include "dlcz/config.hpp"
#include "dlcz/emission.hpp"
#include "dlcz/pipeline.hpp"

using namespace dlcz;

namespace {

ExperimentConfig quiet_config() {
  ExperimentConfig c;
  c.echo_leak_fraction = 0.0;
  c.dark_count_rate_hz = 0.0;
  c.uncorrelated_noise_fraction_s = 0.0;
  c.uncorrelated_noise_fraction_as = 0.0;
  return c;
}

}  // namespace

TEST_SUITE("emission") {
  TEST_CASE("same config and seed give the same stream at any thread count") {
    const auto cfg = calibrated_config();
    const auto a = run_trials(cfg, 50000);
    RunOptions ro;
    ro.threads = 4;
    ro.chunk_trials = 777;
    CHECK(run_trials(cfg, 50000, ro) == a);
    auto other = cfg;
    other.rng_seed += 1;
    CHECK(run_trials(other, 50000) != a);
    CHECK(!a.empty());
  }

  TEST_CASE("a sub-range of trials reproduces the matching slice") {
    const auto cfg = calibrated_config();
    const auto all = run_trials(cfg, 30000);
    RunOptions ro;
    ro.first_trial = 10000;
    const auto tail = run_trials(cfg, 20000, ro);
    std::vector<DetectionEvent> expect;
    for (const auto& e : all) {
      if (e.trial_id >= 10000) expect.push_back(e);
    }
    CHECK(tail == expect);
  }

  TEST_CASE("invalid config is rejected before any event") {
    ExperimentConfig c;
    c.branching_ratio = 1.2;
    CHECK_THROWS_AS(EmissionSimulator{c}, ConfigError);
    CHECK_THROWS_AS((void)run_trials(c, 10), ConfigError);
  }

  TEST_CASE("detected stokes probability follows slope * P_w") {
    for (double pw : {4.0, 16.0, 64.0}) {
      auto c = quiet_config();
      c.write_power_uW = pw;
      c.rng_seed = static_cast<std::uint64_t>(pw);
      const std::uint64_t n = 400000;
      const auto ev = run_trials(c, n);
      const double k = static_cast<double>(std::count_if(
          ev.begin(), ev.end(), [](const DetectionEvent& e) { return e.channel == Channel::Stokes; }));
      const double p = c.stokes_probability();
      const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
      CHECK(std::abs(k / static_cast<double>(n) - p) <= 3.0 * sigma);
    }
  }

  TEST_CASE("without jitter every pair sums to the AFC delay") {
    auto c = quiet_config();
    c.emission_jitter = false;
    c.coincidence_jitter_fwhm_ns = 0.0;
    c.write_power_uW = 4.0;
    c.antistokes_transmission = 1.0;
    c.readout_budget.eta_RP = 1.0;
    const auto ev = run_trials(c, 3000000);
    const auto s = TrialSchedule::from_config(c);
    std::map<std::uint64_t, std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>>> by_trial;
    for (const auto& e : ev) {
      auto& slot = by_trial[e.trial_id];
      if (e.channel == Channel::Stokes) slot.first.push_back(e.t_ns - s.write_t_ns);
      else slot.second.push_back(e.t_ns - s.read_t_ns);
    }
    std::size_t pairs = 0, on_delay = 0;
    for (const auto& [trial, v] : by_trial) {
      if (v.first.size() == 1 && v.second.size() == 1) {
        ++pairs;
        if (std::llabs(v.first[0] + v.second[0] - 8000) <= 1) ++on_delay;
      }
    }
    REQUIRE(pairs > 100);
    // Two-pair trials can mix photons of different pairs.
    CHECK(static_cast<double>(on_delay) / static_cast<double>(pairs) > 0.99);
  }

  TEST_CASE("one click per detector per gate, inside the gates") {
    auto c = calibrated_config();
    c.write_power_uW = 64.0;
    c.splitter_stokes = true;
    const auto ev = run_trials(c, 100000);
    const auto s = TrialSchedule::from_config(c);
    std::map<std::tuple<std::uint64_t, int, int>, int> clicks;
    std::size_t d1 = 0, stokes = 0;
    for (const auto& e : ev) {
      ++clicks[{e.trial_id, static_cast<int>(e.channel), e.detector_id}];
      const auto& gate = e.channel == Channel::Stokes ? s.stokes_gate : s.antistokes_gate;
      CHECK(gate.contains(e.t_ns));
      if (e.channel == Channel::Stokes) {
        ++stokes;
        d1 += e.detector_id;
      }
    }
    for (const auto& [key, n] : clicks) CHECK(n == 1);
    const double f = static_cast<double>(d1) / static_cast<double>(stokes);
    CHECK(std::abs(f - 0.5) < 4.0 * std::sqrt(0.25 / static_cast<double>(stokes)));
  }

  TEST_CASE("echo leak carries the configured share of anti-Stokes light") {
    const auto c = calibrated_config();
    const auto plan = make_plan(c);
    const auto& s = plan.schedule;
    const double noise = plan.noise.antistokes_per_ns * static_cast<double>(s.antistokes_gate.length());
    const double total = plan.echo_mean + plan.expected_antistokes_signal + noise;
    CHECK(plan.echo_mean / total == doctest::Approx(c.echo_leak_fraction).epsilon(1e-9));
    CHECK(plan.echo_center_ns == doctest::Approx(s.read_t_ns + 8500.0));
  }

  TEST_CASE("zero write power leaves only uncorrelated counts") {
    auto c = calibrated_config();
    c.write_power_uW = 0.0;
    c.noise_reference_power_uW = 16.0;
    c.dark_count_rate_hz = 20000.0;
    const std::uint64_t n = 1000000;
    const auto spec = AnalysisSpec::from_config(c);
    const auto acc = simulate_and_accumulate(EmissionSimulator(c), spec, n);
    CHECK(acc.channel_events(Channel::Stokes) > 0);
    const auto g = g2_cross(acc, 8000, 6000);
    CHECK(std::abs(g.value - 1.0) <= 3.0 * g.sigma);
  }

  TEST_CASE("noise floor is held fixed across write power") {
    auto c = calibrated_config();
    c.noise_reference_power_uW = 16.0;
    auto lo = c;
    lo.write_power_uW = 1.0;
    const auto a = resolve_noise(c);
    const auto b = resolve_noise(lo);
    CHECK(a.stokes_per_ns == b.stokes_per_ns);
    CHECK(a.antistokes_per_ns == b.antistokes_per_ns);
  }

  TEST_CASE("sweep preconditions and seeding") {
    const auto c = calibrated_config();
    CHECK_THROWS_AS((void)run_sweep(c, SweepAxis::WritePower, {}, 10), std::invalid_argument);
    const std::vector<double> unsorted{4, 2};
    CHECK_THROWS_AS((void)run_sweep(c, SweepAxis::WritePower, unsorted, 10), std::invalid_argument);
    const std::vector<double> neg{-1, 2};
    CHECK_THROWS_AS((void)run_sweep(c, SweepAxis::WritePower, neg, 10), std::invalid_argument);
    const std::vector<double> ts{2, 5, 8};
    const auto pts = run_sweep(c, SweepAxis::StorageTime, ts, 10);
    REQUIRE(pts.size() == 3);
    CHECK(pts[0].config.rng_seed != pts[1].config.rng_seed);
    for (const auto& p : pts) {
      const double mean_ts = p.config.read_delay_us - p.config.stokes_gate_offset_us - 0.5 * p.config.stokes_window_us;
      CHECK(mean_ts == doctest::Approx(p.value));
    }
    CHECK(parse_sweep_axis("window_T") == SweepAxis::WindowT);
    CHECK_THROWS_AS((void)parse_sweep_axis("nope"), std::invalid_argument);
  }

  TEST_CASE("independent Poisson source is uncorrelated") {
    auto c = calibrated_config();
    c.source_model = SourceModel::IndependentPoisson;
    c.noise_statistics = NoiseStatistics::Poisson;
    c.write_power_uW = 64.0;
    const auto acc = simulate_and_accumulate(EmissionSimulator(c), AnalysisSpec::from_config(c), 2000000);
    const auto g = g2_cross(acc, 8000, 1000);
    CHECK(std::abs(g.value - 1.0) <= 3.0 * g.sigma);
  }
}
