#include "dlcz/events.hpp"

#include <fmt/format.h>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <tuple>

#include "dlcz/version.hpp"

namespace dlcz {

namespace {

constexpr std::size_t kRecordSize = 16;

std::int64_t us_to_ns(double us) { return std::llround(us * 1e3); }

template <typename T>
void put_le(char* dst, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    dst[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xffU);
  }
}

template <typename T>
T get_le(const unsigned char* src) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(src[i]) << (8 * i);
  return static_cast<T>(v);
}

template <typename Int>
Int parse_field(std::string_view s, std::size_t line_no) {
  Int out{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw EventFormatError(fmt::format("line {}: bad integer field '{}'", line_no, s));
  }
  return out;
}

DetectionEvent parse_line(std::string_view line, std::size_t line_no) {
  std::array<std::string_view, 4> parts;
  std::size_t n = 0;
  while (n < 4) {
    const auto comma = line.find(',');
    parts[n++] = line.substr(0, comma);
    if (comma == std::string_view::npos) break;
    line = line.substr(comma + 1);
    if (n == 4) throw EventFormatError(fmt::format("line {}: too many fields", line_no));
  }
  if (n != 4) throw EventFormatError(fmt::format("line {}: expected 4 fields", line_no));
  DetectionEvent e;
  e.trial_id = parse_field<std::uint64_t>(parts[0], line_no);
  if (parts[1] == "S") {
    e.channel = Channel::Stokes;
  } else if (parts[1] == "AS") {
    e.channel = Channel::AntiStokes;
  } else {
    throw EventFormatError(fmt::format("line {}: unknown channel '{}'", line_no, parts[1]));
  }
  const auto det = parse_field<unsigned>(parts[2], line_no);
  if (det > 1) throw EventFormatError(fmt::format("line {}: detector_id must be 0 or 1", line_no));
  e.detector_id = static_cast<std::uint8_t>(det);
  e.t_ns = parse_field<std::uint32_t>(parts[3], line_no);
  return e;
}

}  // namespace

std::string_view to_string(Channel c) { return c == Channel::Stokes ? "S" : "AS"; }

bool event_less(const DetectionEvent& a, const DetectionEvent& b) {
  return std::tie(a.trial_id, a.t_ns, a.channel, a.detector_id) <
         std::tie(b.trial_id, b.t_ns, b.channel, b.detector_id);
}

TrialSchedule TrialSchedule::from_config(const ExperimentConfig& c) {
  TrialSchedule s;
  s.write_t_ns = 0;
  s.stokes_gate.start_ns = us_to_ns(c.stokes_gate_offset_us);
  s.stokes_gate.end_ns = us_to_ns(c.stokes_gate_offset_us + c.stokes_window_us);
  s.read_t_ns = us_to_ns(c.read_delay_us);
  s.antistokes_gate.start_ns = s.read_t_ns + us_to_ns(c.antistokes_gate_start_us);
  s.antistokes_gate.end_ns = s.read_t_ns + us_to_ns(c.antistokes_gate_end_us);
  return s;
}

bool TrialSchedule::is_consistent() const {
  return write_t_ns <= stokes_gate.start_ns && stokes_gate.start_ns < stokes_gate.end_ns &&
         stokes_gate.end_ns <= read_t_ns && read_t_ns <= antistokes_gate.start_ns &&
         antistokes_gate.start_ns < antistokes_gate.end_ns;
}

std::string OutputHeader::render() const {
  std::string out = fmt::format("# {} {} seed={} config_hash={:016x}\n", kToolName, kToolVersion,
                                seed, config_hash);
  if (!extra.empty()) {
    std::string_view rest = extra;
    while (!rest.empty()) {
      const auto nl = rest.find('\n');
      out += fmt::format("# {}\n", rest.substr(0, nl));
      rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    }
  }
  return out;
}

EventFileFormat format_for_path(std::string_view path) {
  return path.ends_with(".bin") ? EventFileFormat::Binary : EventFileFormat::Text;
}

EventWriter::EventWriter(std::ostream& out, EventFileFormat format, const OutputHeader& header)
    : out_(out), format_(format) {
  if (format_ == EventFileFormat::Text) {
    out_ << header.render() << "trial_id,channel,detector_id,t_ns\n";
  }
}

void EventWriter::write(std::span<const DetectionEvent> events) {
  buffer_.clear();
  for (const auto& e : events) {
    if (have_last_ && event_less(e, last_)) {
      throw EventFormatError("EventWriter: events out of (trial_id, t_ns) order");
    }
    last_ = e;
    have_last_ = true;
    if (format_ == EventFileFormat::Text) {
      fmt::format_to(std::back_inserter(buffer_), "{},{},{},{}\n", e.trial_id,
                     to_string(e.channel), e.detector_id, e.t_ns);
    } else {
      std::array<char, kRecordSize> rec{};
      put_le(rec.data(), e.trial_id);
      put_le(rec.data() + 8, e.t_ns);
      rec[12] = static_cast<char>(e.channel);
      rec[13] = static_cast<char>(e.detector_id);
      buffer_.append(rec.data(), rec.size());
    }
  }
  out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  count_ += events.size();
}

std::vector<DetectionEvent> read_events(std::istream& in, EventFileFormat format) {
  std::vector<DetectionEvent> events;
  if (format == EventFileFormat::Binary) {
    std::array<unsigned char, kRecordSize> rec{};
    while (in.read(reinterpret_cast<char*>(rec.data()), kRecordSize)) {
      DetectionEvent e;
      e.trial_id = get_le<std::uint64_t>(rec.data());
      e.t_ns = get_le<std::uint32_t>(rec.data() + 8);
      if (rec[12] > 1 || rec[13] > 1) throw EventFormatError("binary record: bad channel/detector");
      e.channel = static_cast<Channel>(rec[12]);
      e.detector_id = rec[13];
      events.push_back(e);
    }
    if (in.gcount() != 0) throw EventFormatError("binary event file: truncated record");
  } else {
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      if (!header_seen) {
        if (line != "trial_id,channel,detector_id,t_ns") {
          throw EventFormatError(fmt::format("line {}: missing header row", line_no));
        }
        header_seen = true;
        continue;
      }
      events.push_back(parse_line(line, line_no));
    }
    if (!header_seen) throw EventFormatError("event file: missing header row");
  }
  require_sorted(events);
  return events;
}

std::vector<DetectionEvent> read_event_file(const std::string& path) {
  const auto format = format_for_path(path);
  std::ifstream in(path, format == EventFileFormat::Binary ? std::ios::binary : std::ios::in);
  if (!in) throw EventFormatError(fmt::format("cannot open event file '{}'", path));
  return read_events(in, format);
}

void write_event_file(const std::string& path, std::span<const DetectionEvent> events,
                      const OutputHeader& header) {
  const auto format = format_for_path(path);
  std::ofstream out(path, format == EventFileFormat::Binary ? std::ios::binary : std::ios::out);
  if (!out) throw EventFormatError(fmt::format("cannot write event file '{}'", path));
  EventWriter writer(out, format, header);
  writer.write(events);
}

void require_sorted(std::span<const DetectionEvent> events) {
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (event_less(events[i], events[i - 1])) {
      throw EventFormatError(
          fmt::format("event stream not sorted by (trial_id, t_ns) at index {}", i));
    }
  }
}

}  // namespace dlcz
