#include "dlcz/pipeline.hpp"

#include <algorithm>
#include <memory>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace dlcz {

namespace {

CorrelationAccumulator run_shard(const EmissionSimulator& sim, const AnalysisSpec& spec,
                                 std::uint64_t from, std::uint64_t to, std::uint64_t run_start,
                                 const EventSink* tap) {
  CorrelationAccumulator acc(spec);
  int max_offset = 0;
  for (int o : spec.offsets) max_offset = std::max(max_offset, std::abs(o));
  const std::uint64_t ctx_from =
      from - std::min<std::uint64_t>(from - run_start, static_cast<std::uint64_t>(max_offset));
  std::vector<DetectionEvent> buf;
  for (std::uint64_t t = ctx_from; t < from; ++t) sim.simulate_trial(t, buf);
  acc.add_context(buf);

  constexpr std::uint64_t kChunk = 1U << 16;
  for (std::uint64_t pos = from; pos < to; pos += kChunk) {
    buf.clear();
    const std::uint64_t end = std::min(pos + kChunk, to);
    for (std::uint64_t t = pos; t < end; ++t) sim.simulate_trial(t, buf);
    if (tap) (*tap)(buf);
    acc.add_events(buf);
  }
  acc.add_trials(to - from);
  return acc;
}

}  // namespace

CorrelationAccumulator simulate_and_accumulate(const EmissionSimulator& sim, const AnalysisSpec& spec,
                                               std::uint64_t n_trials,
                                               const PipelineOptions& options) {
  const std::uint64_t start = options.first_trial;
  const std::uint64_t end = start + n_trials;
  const unsigned shards =
      options.tap ? 1U : static_cast<unsigned>(std::clamp<std::uint64_t>(options.threads, 1, std::max<std::uint64_t>(1, n_trials)));
  if (shards == 1) return run_shard(sim, spec, start, end, start, options.tap);

  std::vector<std::unique_ptr<CorrelationAccumulator>> parts(shards);
  std::vector<std::exception_ptr> errors(shards);
  {
    std::vector<std::jthread> workers;
    for (unsigned s = 0; s < shards; ++s) {
      const std::uint64_t from = start + n_trials * s / shards;
      const std::uint64_t to = start + n_trials * (s + 1) / shards;
      workers.emplace_back([&, s, from, to] {
        try {
          parts[s] = std::make_unique<CorrelationAccumulator>(run_shard(sim, spec, from, to, start, nullptr));
        } catch (...) {
          errors[s] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  CorrelationAccumulator total = std::move(*parts[0]);
  for (unsigned s = 1; s < shards; ++s) total.merge(*parts[s]);
  return total;
}

}  // namespace dlcz
