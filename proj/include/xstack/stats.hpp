#pragma once

#include <span>

namespace xstack {

// Min / max / nearest-rank P90 / mean of a latency sample set. Units are
// whatever the caller supplies (the pipeline uses milliseconds).
struct LatencyStats {
  double min = 0.0;
  double max = 0.0;
  double p90 = 0.0;
  double avg = 0.0;
  // False when avg > p90: legal for heavy-tailed samples but worth flagging.
  bool avg_within_p90 = true;

  bool operator==(const LatencyStats&) const = default;
};

// Nearest-rank percentile: value at 1-based rank ceil(q * n) of the sorted
// samples. q in (0, 1]. Throws InvalidArgument on empty input.
double nearest_rank_percentile(std::span<const double> samples, double q);

LatencyStats latency_stats(std::span<const double> samples);

}  // namespace xstack
