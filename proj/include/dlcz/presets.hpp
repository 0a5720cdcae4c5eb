#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dlcz/config.hpp"
#include "dlcz/measurement.hpp"

namespace dlcz {

/// One acceptance band evaluated by a preset.
struct BandCheck {
  std::string name;
  Measurement value;
  std::string band;  ///< human-readable rule
  bool pass = false;
};

struct PresetOptions {
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> trials;  ///< per simulated point; preset default otherwise
  std::optional<std::uint64_t> seed;    ///< overrides the config seed
  unsigned threads = 1;
  bool write_events = false;            ///< also write a binary event file per simulated point
};

struct PresetResult {
  std::string preset;
  std::uint64_t seed = 0;
  std::uint64_t trials_per_point = 0;
  std::vector<BandCheck> checks;
  std::map<std::string, Measurement> values;
  std::vector<std::filesystem::path> files;

  [[nodiscard]] bool passed() const;
  [[nodiscard]] std::string summary() const;
};

[[nodiscard]] const std::vector<std::string>& preset_names();

/// Base configuration of a preset (calibrated defaults plus preset overrides).
[[nodiscard]] ExperimentConfig preset_config(std::string_view preset);
[[nodiscard]] std::uint64_t preset_default_trials(std::string_view preset);

/// Runs the simulate + analyse pipeline of a preset and writes its CSV bundle
/// and `<preset>_summary.txt` into out_dir. Throws std::invalid_argument for
/// an unknown preset and std::runtime_error when out_dir is not writable.
[[nodiscard]] PresetResult run_preset(std::string_view preset, const PresetOptions& options);

}  // namespace dlcz
