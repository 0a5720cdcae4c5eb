#include <doctest.h>

#include <algorithm>

#include "dlcz/config.hpp"

using namespace dlcz;

namespace {

bool has_violation(const std::vector<std::string>& v, std::string_view needle) {
  return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("default config is valid") {
    CHECK(validate(ExperimentConfig{}).empty());
    CHECK(validate(calibrated_config()).empty());
  }

  TEST_CASE("branching ratio outside [0,1]") {
    ExperimentConfig c;
    c.branching_ratio = 1.2;
    const auto v = validate(c);
    REQUIRE(v.size() == 1);
    CHECK(v[0] == "branching_ratio out of [0,1]");
  }

  TEST_CASE("stokes gate overlapping the read pulse") {
    ExperimentConfig c;
    c.stokes_gate_offset_us = 7.0;
    c.stokes_window_us = 2.0;
    c.read_delay_us = 8.0;
    CHECK(has_violation(validate(c), "overlaps read pulse"));
  }

  TEST_CASE("per-trial stokes probability must stay below 1") {
    ExperimentConfig c;
    c.write_power_uW = 2000.0;
    CHECK(has_violation(validate(c), "must be < 1"));
  }

  TEST_CASE("validate is idempotent and reports every violation") {
    ExperimentConfig c;
    c.branching_ratio = -0.1;
    c.afc_delay_us = 0.0;
    c.trials_per_prep = 0;
    const auto a = validate(c);
    CHECK(a == validate(c));
    CHECK(a.size() >= 3);
    CHECK_THROWS_AS(require_valid(c), ConfigError);
  }

  TEST_CASE("serialize then parse is the identity") {
    ExperimentConfig c = calibrated_config();
    c.write_power_uW = 3.25;
    c.rng_seed = 0xfedcba9876543210ULL;
    c.source_model = SourceModel::IndependentPoisson;
    c.noise_statistics = NoiseStatistics::Poisson;
    c.splitter_antistokes = true;
    c.readout_budget.beta_G = 0.1 + 0.2;
    const auto text = serialize_config(c);
    const auto back = parse_config(text);
    CHECK(serialize_config(back) == text);
    CHECK(config_hash(back) == config_hash(c));
    CHECK(back.readout_budget.beta_G == c.readout_budget.beta_G);
    CHECK(back.rng_seed == c.rng_seed);
  }

  TEST_CASE("parser rejects unknown and duplicate keys and bad values") {
    CHECK_THROWS_AS((void)parse_config("no_such_key = 1\n"), ConfigError);
    CHECK_THROWS_AS((void)parse_config("write_power_uW = 1\nwrite_power_uW = 2\n"), ConfigError);
    CHECK_THROWS_AS((void)parse_config("write_power_uW = fast\n"), ConfigError);
    CHECK_THROWS_AS((void)parse_config("write_power_uW\n"), ConfigError);
  }

  TEST_CASE("parser keeps defaults for absent keys and ignores comments") {
    const auto c = parse_config("# comment\n\nwrite_power_uW = 64  # trailing\n");
    CHECK(c.write_power_uW == 64.0);
    CHECK(c.afc_delay_us == ExperimentConfig{}.afc_delay_us);
  }

  TEST_CASE("config hash changes with any field") {
    ExperimentConfig a;
    ExperimentConfig b;
    b.echo_leak_time_us += 1e-9;
    CHECK(config_hash(a) != config_hash(b));
  }
}
