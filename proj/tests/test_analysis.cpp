#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dlcz/analysis.hpp"
#include "dlcz/config.hpp"
#include "dlcz/emission.hpp"
#include "dlcz/pipeline.hpp"

using namespace dlcz;
using doctest::Approx;

namespace {

AnalysisSpec default_spec() { return AnalysisSpec::from_config(ExperimentConfig{}); }

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

const std::vector<DetectionEvent>& reference_stream() {
  static const auto ev = [] {
    auto c = calibrated_config();
    c.splitter_stokes = true;
    c.splitter_antistokes = true;
    c.write_power_uW = 64.0;
    return run_trials(c, 3000000);
  }();
  return ev;
}

constexpr std::uint64_t kStreamTrials = 3000000;

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("3 us + 5 us lands in the 8 us bin") {
    const auto spec = default_spec();
    const std::vector<DetectionEvent> ev{{0, Channel::Stokes, 0, 3000},
                                         {0, Channel::AntiStokes, 0, static_cast<std::uint32_t>(spec.schedule.read_t_ns + 5000)}};
    const auto acc = accumulate(ev, spec, 1);
    const auto h = coincidence_histogram(acc, 400);
    REQUIRE(sum(h.same_trial.counts) == 1.0);
    const auto it = std::max_element(h.same_trial.counts.begin(), h.same_trial.counts.end());
    CHECK(h.same_trial.centers_ns[static_cast<std::size_t>(it - h.same_trial.counts.begin())] == 8000.0);
    CHECK(sum(h.accidental_mean.counts) == 0.0);
  }

  TEST_CASE("stream without anti-Stokes events gives an all-zero histogram") {
    const std::vector<DetectionEvent> ev{{0, Channel::Stokes, 0, 2000}, {1, Channel::Stokes, 0, 2500},
                                         {7, Channel::Stokes, 0, 1500}};
    const auto acc = accumulate(ev, default_spec(), 10);
    const auto h = coincidence_histogram(acc, 400);
    CHECK(sum(h.same_trial.counts) == 0.0);
    CHECK(sum(h.accidental_mean.counts) == 0.0);
    CHECK(sum(h.stokes_times.counts) == 3.0);
  }

  TEST_CASE("unsorted stream is rejected") {
    const std::vector<DetectionEvent> ev{{2, Channel::Stokes, 0, 2000}, {1, Channel::Stokes, 0, 2500}};
    CHECK_THROWS_AS((void)accumulate(ev, default_spec(), 3), AnalysisError);
  }

  TEST_CASE("histogram totals match pair and event counts") {
    const auto& ev = reference_stream();
    const auto acc = accumulate(ev, default_spec(), kStreamTrials);
    std::uint64_t pairs = 0;
    std::size_t i = 0;
    while (i < ev.size()) {
      std::size_t j = i;
      std::uint64_t s = 0, a = 0;
      while (j < ev.size() && ev[j].trial_id == ev[i].trial_id) {
        (ev[j].channel == Channel::Stokes ? s : a) += 1;
        ++j;
      }
      pairs += s * a;
      i = j;
    }
    const auto h = coincidence_histogram(acc, 400);
    CHECK(sum(h.same_trial.counts) == static_cast<double>(pairs));
    CHECK(sum(h.stokes_times.counts) == static_cast<double>(acc.channel_events(Channel::Stokes)));
    CHECK(sum(h.antistokes_times.counts) == static_cast<double>(acc.channel_events(Channel::AntiStokes)));
  }

  TEST_CASE("shards with context merge to the single-pass result") {
    const auto& ev = reference_stream();
    const auto spec = default_spec();
    const auto whole = accumulate(ev, spec, kStreamTrials);
    const std::uint64_t cut = 1234567;
    const auto split = std::partition_point(ev.begin(), ev.end(), [&](const DetectionEvent& e) { return e.trial_id < cut; });
    const auto ctx = std::partition_point(ev.begin(), ev.end(), [&](const DetectionEvent& e) { return e.trial_id + 5 < cut; });
    CorrelationAccumulator a(spec), b(spec);
    a.add_events({ev.begin(), split});
    a.add_trials(cut);
    b.add_context({ctx, split});
    b.add_events({split, ev.end()});
    b.add_trials(kStreamTrials - cut);
    a.merge(b);
    const auto lo = whole.sum_min_ns();
    const auto hi = lo + static_cast<std::int64_t>(whole.sum_bins());
    CHECK(a.same_in(lo, hi) == whole.same_in(lo, hi));
    CHECK(a.accidental_in(lo, hi) == whole.accidental_in(lo, hi));
    CHECK(a.accidental_in(7500, 8500) == whole.accidental_in(7500, 8500));
    CHECK(a.auto_same_in(Channel::Stokes, -1000, 1000) == whole.auto_same_in(Channel::Stokes, -1000, 1000));
    CHECK(a.auto_accidental_in(Channel::AntiStokes, -8000, 8000) ==
          whole.auto_accidental_in(Channel::AntiStokes, -8000, 8000));
    CHECK(a.channel_events(Channel::Stokes) == whole.channel_events(Channel::Stokes));
    CHECK(a.accidental_exposure() == Approx(whole.accidental_exposure()));
    CHECK(g2_cross(a, 8000, 1000).value == g2_cross(whole, 8000, 1000).value);
    CorrelationAccumulator other(AnalysisSpec{spec.schedule, 8000, {1, 2}, 0});
    CHECK_THROWS_AS(a.merge(other), AnalysisError);
  }

  TEST_CASE("pipeline result does not depend on the thread count") {
    const auto c = calibrated_config();
    const auto spec = AnalysisSpec::from_config(c);
    const EmissionSimulator sim(c);
    const auto one = simulate_and_accumulate(sim, spec, 400000);
    PipelineOptions po;
    po.threads = 3;
    const auto three = simulate_and_accumulate(sim, spec, 400000, po);
    const auto lo = one.sum_min_ns();
    const auto hi = lo + static_cast<std::int64_t>(one.sum_bins());
    CHECK(one.same_in(lo, hi) == three.same_in(lo, hi));
    CHECK(one.accidental_in(lo, hi) == three.accidental_in(lo, hi));
    CHECK(one.channel_events(Channel::AntiStokes) == three.channel_events(Channel::AntiStokes));
    const auto direct = accumulate(run_trials(c, 400000), spec, 400000);
    CHECK(direct.accidental_in(lo, hi) == one.accidental_in(lo, hi));
  }

  TEST_CASE("g2 is invariant under trial relabeling and time translation") {
    const auto& ev = reference_stream();
    const auto spec = default_spec();
    const auto base = g2_cross(accumulate(ev, spec, kStreamTrials), 8000, 1000);

    // Reversing the trial order maps each offset o to -o.
    auto reversed = ev;
    for (auto& e : reversed) e.trial_id = kStreamTrials - 1 - e.trial_id;
    std::sort(reversed.begin(), reversed.end(), event_less);
    const auto g_relabel = g2_cross(accumulate(reversed, spec, kStreamTrials), 8000, 1000);
    CHECK(g_relabel.value == Approx(base.value).epsilon(1e-12));

    auto moved = ev;
    for (auto& e : moved) e.t_ns += 250;
    auto spec2 = spec;
    for (auto* t : {&spec2.schedule.write_t_ns, &spec2.schedule.read_t_ns}) *t += 250;
    for (auto* g : {&spec2.schedule.stokes_gate, &spec2.schedule.antistokes_gate}) {
      g->start_ns += 250;
      g->end_ns += 250;
    }
    const auto g_moved = g2_cross(accumulate(moved, spec2, kStreamTrials), 8000, 1000);
    CHECK(g_moved.value == Approx(base.value).epsilon(1e-12));
  }

  TEST_CASE("independent thinning leaves g2 and R unchanged") {
    const auto& ev = reference_stream();
    const auto spec = default_spec();
    std::mt19937_64 rng(99);
    std::bernoulli_distribution keep(0.5);
    std::vector<DetectionEvent> thin;
    for (const auto& e : ev) {
      if (keep(rng)) thin.push_back(e);
    }
    ReportOptions ro;
    ro.include_auto = true;
    ro.center_ns = 8000;
    const auto full = analyze(accumulate(ev, spec, kStreamTrials), ro);
    const auto half = analyze(accumulate(thin, spec, kStreamTrials), ro);
    CHECK(std::abs(half.g2_cross.value - full.g2_cross.value) <= 3.0 * half.g2_cross.sigma);
    REQUIRE(full.R);
    REQUIRE(half.R);
    CHECK(std::abs(half.R->value - full.R->value) <= 3.0 * half.R->sigma);
  }

  TEST_CASE("g2 error bars agree with a block bootstrap") {
    const auto& ev = reference_stream();
    const auto spec = default_spec();
    const auto g = g2_cross(accumulate(ev, spec, kStreamTrials), 8000, 1000);
    const double boot = bootstrap_g2_sigma(ev, spec, kStreamTrials, 8000, 1000, 40, 200, 5);
    CHECK(boot / g.sigma > 0.7);
    CHECK(boot / g.sigma < 1.4);
  }

  TEST_CASE("g2 requires accidentals") {
    const std::vector<DetectionEvent> ev{{0, Channel::Stokes, 0, 3000}, {0, Channel::AntiStokes, 0, 13000}};
    const auto acc = accumulate(ev, default_spec(), 1);
    CHECK_THROWS_WITH_AS((void)g2_cross(acc, 8000, 1000), doctest::Contains("increase the number of trials"),
                         AnalysisError);
  }

  TEST_CASE("g2_auto requires both detectors") {
    const std::vector<DetectionEvent> ev{{0, Channel::Stokes, 0, 3000}, {1, Channel::Stokes, 0, 2000}};
    const auto acc = accumulate(ev, default_spec(), 2);
    CHECK_THROWS_AS((void)g2_auto(acc, Channel::Stokes, 1000), AnalysisError);
  }

  TEST_CASE("cauchy-schwarz arithmetic") {
    CHECK(cauchy_schwarz_R(11.9, 1.85, 1.75) == Approx(43.741).epsilon(1e-4));
    CHECK(cauchy_schwarz_R(1.0, 1.0, 1.0) == 1.0);
    CHECK(cauchy_schwarz_R(2.0, 2.0, 2.0) == 1.0);
    CHECK_THROWS_AS((void)cauchy_schwarz_R(1.0, 0.0, 1.0), AnalysisError);
    const auto r = cauchy_schwarz_R(Measurement{10, 1}, Measurement{2, 0}, Measurement{2, 0});
    CHECK(r.value == 25.0);
    CHECK(r.sigma == Approx(5.0));
  }

  TEST_CASE("zero retrieval gives zero read-out efficiency") {
    auto c = calibrated_config();
    c.readout_budget.eta_reph = 0.0;
    c.write_power_uW = 64.0;
    const auto acc = simulate_and_accumulate(EmissionSimulator(c), AnalysisSpec::from_config(c), 1000000);
    const auto eta = readout_efficiency(acc, 8000, 1000);
    CHECK(std::abs(eta.value) <= 3.0 * eta.sigma);
    const auto empty = accumulate({}, default_spec(), 10);
    CHECK_THROWS_AS((void)readout_efficiency(empty, 8000, 1000), AnalysisError);
  }

  TEST_CASE("mode count") {
    CHECK(mode_count(5500, 500) == 11);
    CHECK(mode_count(2000, 2000) == 1);
    CHECK(mode_count(5499, 500) == 10);
    CHECK_THROWS_AS((void)mode_count(400, 500), AnalysisError);
  }

  TEST_CASE("report fields and renderings") {
    const auto& ev = reference_stream();
    ReportOptions ro;
    ro.include_auto = true;
    ro.antistokes_transmission = 0.24;
    ro.trials_per_hour = 1e6;
    const auto r = analyze(accumulate(ev, default_spec(), kStreamTrials), ro);
    CHECK(r.n_trials == kStreamTrials);
    CHECK(std::llabs(r.center_ns - 8000) <= 400);
    for (double p : {r.p_s, r.p_as, r.p_coinc, r.p_coinc_accidental}) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    CHECK(r.g2_cross.sigma >= 0.0);
    CHECK(r.eta_RO_crystal->value == Approx(r.eta_RO.value / 0.24));
    const auto text = format_report(r);
    CHECK(text.find("g2_cross = ") != std::string::npos);
    CHECK(text.find("bell_threshold_g2 = 6") != std::string::npos);
    CHECK(report_json(r).find("\"g2_cross\"") != std::string::npos);
    ReportOptions no_auto;
    const auto r2 = analyze(accumulate(ev, default_spec(), kStreamTrials), no_auto);
    CHECK_FALSE(r2.R.has_value());
  }

  TEST_CASE("offsets table lists the same trial and every accidental offset") {
    const auto& ev = reference_stream();
    const auto acc = accumulate(ev, default_spec(), kStreamTrials);
    const auto rows = coincidences_by_offset(acc, 8000, 1000, 3600.0);
    CHECK(rows.size() == 11);
    CHECK(rows.front().offset == -5);
    CHECK(rows.back().offset == 5);
    const auto same = std::find_if(rows.begin(), rows.end(), [](const auto& o) { return o.offset == 0; });
    REQUIRE(same != rows.end());
    for (const auto& o : rows) {
      if (o.offset != 0) CHECK(o.coincidences < same->coincidences);
    }
  }
}
