#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dlcz/config.hpp"

namespace dlcz {

enum class Channel : std::uint8_t { Stokes = 0, AntiStokes = 1 };

[[nodiscard]] std::string_view to_string(Channel c);

/// One detector click. Times are integer nanoseconds since the trial start.
struct DetectionEvent {
  std::uint64_t trial_id = 0;
  Channel channel = Channel::Stokes;
  std::uint8_t detector_id = 0;
  std::uint32_t t_ns = 0;

  friend bool operator==(const DetectionEvent&, const DetectionEvent&) = default;
};

/// Stream order: (trial_id, t_ns), ties broken by channel then detector.
[[nodiscard]] bool event_less(const DetectionEvent& a, const DetectionEvent& b);

struct Gate {
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;  // exclusive
  [[nodiscard]] std::int64_t length() const { return end_ns - start_ns; }
  [[nodiscard]] bool contains(std::int64_t t) const { return t >= start_ns && t < end_ns; }
};

/// Timing layout of one trial. The write pulse defines t = 0.
struct TrialSchedule {
  std::int64_t write_t_ns = 0;
  Gate stokes_gate;
  std::int64_t read_t_ns = 0;
  Gate antistokes_gate;

  [[nodiscard]] static TrialSchedule from_config(const ExperimentConfig& config);
  [[nodiscard]] bool is_consistent() const;
};

class EventFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Metadata written as '#' comment lines at the top of text outputs.
struct OutputHeader {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::string extra;

  [[nodiscard]] std::string render() const;
};

// Text format: header comments, a `trial_id,channel,detector_id,t_ns` header
// row, then one line per event with channel written as S or AS.
// Binary format: packed 16-byte little-endian records
//   u64 trial_id | u32 t_ns | u8 channel | u8 detector_id | u16 zero.
enum class EventFileFormat { Text, Binary };

/// Binary when the path ends in .bin, text otherwise.
[[nodiscard]] EventFileFormat format_for_path(std::string_view path);

/// Incremental writer for either format; events must arrive in stream order.
class EventWriter {
 public:
  EventWriter(std::ostream& out, EventFileFormat format, const OutputHeader& header);
  void write(std::span<const DetectionEvent> events);
  [[nodiscard]] std::uint64_t count() const { return count_; }

 private:
  std::ostream& out_;
  EventFileFormat format_;
  std::uint64_t count_ = 0;
  bool have_last_ = false;
  DetectionEvent last_{};
  std::string buffer_;
};

[[nodiscard]] std::vector<DetectionEvent> read_events(std::istream& in, EventFileFormat format);
[[nodiscard]] std::vector<DetectionEvent> read_event_file(const std::string& path);
void write_event_file(const std::string& path, std::span<const DetectionEvent> events,
                      const OutputHeader& header);

/// Throws EventFormatError on the first out-of-order event.
void require_sorted(std::span<const DetectionEvent> events);

}  // namespace dlcz
