#pragma once

#include <cstdint>

#include "dlcz/analysis.hpp"
#include "dlcz/emission.hpp"

namespace dlcz {

struct PipelineOptions {
  unsigned threads = 1;
  std::uint64_t first_trial = 0;
  /// Receives every simulated event in stream order; forces a single shard.
  const EventSink* tap = nullptr;
};

/// Simulates n_trials and folds them into an accumulator without storing the
/// stream. Shards re-simulate the trials preceding them as context, so the
/// result does not depend on the thread count.
[[nodiscard]] CorrelationAccumulator simulate_and_accumulate(const EmissionSimulator& sim,
                                                             const AnalysisSpec& spec,
                                                             std::uint64_t n_trials,
                                                             const PipelineOptions& options = {});

}  // namespace dlcz
