#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlcz/afc_memory.hpp"
#include "dlcz/config.hpp"
#include "dlcz/measurement.hpp"

namespace dlcz::selftest {

/// Noise-free, jitter-free, lossless-Stokes setting the exact oracle covers.
struct OracleCase {
  double mean_pairs = 0.05;  ///< thermal mean per mode
  double retrieval = 1.0;    ///< anti-Stokes detection probability per stored excitation
  int modes = 1;             ///< 1 or 2
};

[[nodiscard]] ExperimentConfig oracle_config(const OracleCase& c, bool splitters);

struct Comparison {
  std::string quantity;
  Measurement measured;
  double exact = 0.0;
  [[nodiscard]] double z() const { return measured.deviations_from(exact); }
};

/// Monte-Carlo estimates of p_s, p_as, p_s,as, g2_s,as, eta_RO (no splitter)
/// and g2_ss, g2_as,as (splitters on both channels) next to the oracle values.
[[nodiscard]] std::vector<Comparison> oracle_comparison(const OracleCase& c, std::uint64_t trials,
                                                        std::uint64_t seed, unsigned threads = 1);

struct ClassicalPoint {
  double write_power_uW = 0.0;
  Measurement R;
};

/// Cauchy-Schwarz ratio for independent Poisson emission on both channels.
[[nodiscard]] std::vector<ClassicalPoint> classical_R(const std::vector<double>& powers_uW,
                                                      std::uint64_t trials, std::uint64_t seed,
                                                      unsigned threads = 1);

/// Write powers of the classical-substitute runs.
inline const std::vector<double> kClassicalPowers{16, 32, 64, 128, 256};

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SelftestOptions {
  std::uint64_t trials = 2'000'000;
  std::uint64_t classical_trials = 20'000'000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  /// Test hook: conversion constant used by the decay/linewidth pair check.
  double decay_constant = afc::kGaussianDecayConstant;
};

[[nodiscard]] std::vector<Check> run_selftest(const SelftestOptions& options);

}  // namespace dlcz::selftest
