#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "dlcz/config.hpp"
#include "dlcz/emission.hpp"
#include "dlcz/events.hpp"

using namespace dlcz;

namespace {

std::vector<DetectionEvent> sample_events() {
  return {{0, Channel::Stokes, 0, 1500},     {0, Channel::AntiStokes, 1, 13000},
          {3, Channel::Stokes, 0, 2000},     {3, Channel::Stokes, 1, 2000},
          {3, Channel::AntiStokes, 0, 2000}, {1ULL << 40, Channel::AntiStokes, 1, 4000000000U}};
}

}  // namespace

TEST_SUITE("events") {
  TEST_CASE("stream order") {
    auto ev = sample_events();
    CHECK(std::is_sorted(ev.begin(), ev.end(), event_less));
    CHECK_NOTHROW(require_sorted(ev));
    std::swap(ev[0], ev[1]);
    CHECK_THROWS_AS(require_sorted(ev), EventFormatError);
  }

  TEST_CASE("text and binary round trip") {
    const auto ev = sample_events();
    for (auto fmt : {EventFileFormat::Text, EventFileFormat::Binary}) {
      std::stringstream ss;
      EventWriter w(ss, fmt, OutputHeader{7, 42, "trials=5"});
      w.write(std::span(ev).subspan(0, 2));
      w.write(std::span(ev).subspan(2));
      CHECK(w.count() == ev.size());
      ss.seekg(0);
      CHECK(read_events(ss, fmt) == ev);
    }
  }

  TEST_CASE("binary records are 16 bytes little-endian") {
    std::stringstream ss;
    EventWriter w(ss, EventFileFormat::Binary, OutputHeader{});
    const DetectionEvent e{0x0102030405060708ULL, Channel::AntiStokes, 1, 0x0a0b0c0dU};
    w.write(std::span(&e, 1));
    const auto bytes = ss.str();
    REQUIRE(bytes.size() == 16);
    CHECK(static_cast<unsigned char>(bytes[0]) == 0x08);
    CHECK(static_cast<unsigned char>(bytes[7]) == 0x01);
    CHECK(static_cast<unsigned char>(bytes[8]) == 0x0d);
    CHECK(static_cast<unsigned char>(bytes[12]) == 1);
    CHECK(static_cast<unsigned char>(bytes[13]) == 1);
    CHECK(bytes[14] == 0);
    CHECK(bytes[15] == 0);
  }

  TEST_CASE("text format layout") {
    std::stringstream ss;
    EventWriter w(ss, EventFileFormat::Text, OutputHeader{3, 0xabc, ""});
    const DetectionEvent e{12, Channel::AntiStokes, 1, 13000};
    w.write(std::span(&e, 1));
    const auto s = ss.str();
    CHECK(s.find("trial_id,channel,detector_id,t_ns\n12,AS,1,13000\n") != std::string::npos);
    CHECK(s.front() == '#');
  }

  TEST_CASE("writer rejects out-of-order events") {
    std::stringstream ss;
    EventWriter w(ss, EventFileFormat::Text, OutputHeader{});
    std::vector<DetectionEvent> ev{{5, Channel::Stokes, 0, 100}, {4, Channel::Stokes, 0, 100}};
    CHECK_THROWS_AS(w.write(ev), EventFormatError);
    CHECK_THROWS_AS(require_sorted(ev), EventFormatError);
  }

  TEST_CASE("malformed text is rejected") {
    for (const char* bad : {"trial_id,channel,detector_id,t_ns\n1,X,0,5\n",
                            "trial_id,channel,detector_id,t_ns\n1,S,0\n",
                            "trial_id,channel,detector_id,t_ns\n-1,S,0,5\n",
                            "trial_id,channel,detector_id,t_ns\n1,S,0,5\n0,S,0,5\n"}) {
      std::stringstream ss(bad);
      CHECK_THROWS_AS((void)read_events(ss, EventFileFormat::Text), EventFormatError);
    }
    std::stringstream trunc(std::string(15, '\0'));
    CHECK_THROWS_AS((void)read_events(trunc, EventFileFormat::Binary), EventFormatError);
  }

  TEST_CASE("format from path") {
    CHECK(format_for_path("a/b.bin") == EventFileFormat::Binary);
    CHECK(format_for_path("a/b.csv") == EventFileFormat::Text);
    CHECK(format_for_path("bin") == EventFileFormat::Text);
  }

  TEST_CASE("file round trip of a simulated stream") {
    const auto ev = run_trials(calibrated_config(), 20000);
    const auto dir = std::filesystem::temp_directory_path();
    for (const char* name : {"dlcz_events_rt.csv", "dlcz_events_rt.bin"}) {
      const auto path = (dir / name).string();
      write_event_file(path, ev, OutputHeader{1, 2, "trials=20000"});
      CHECK(read_event_file(path) == ev);
      std::filesystem::remove(path);
    }
  }

  TEST_CASE("trial schedule from defaults") {
    const auto s = TrialSchedule::from_config(ExperimentConfig{});
    CHECK(s.write_t_ns == 0);
    CHECK(s.stokes_gate.start_ns == 1400);
    CHECK(s.stokes_gate.end_ns == 3400);
    CHECK(s.read_t_ns == 8000);
    CHECK(s.antistokes_gate.start_ns == 10000);
    CHECK(s.antistokes_gate.end_ns == 18000);
    CHECK(s.is_consistent());
  }
}
