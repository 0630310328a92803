#include "xstack/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "xstack/error.hpp"

namespace xstack {

double nearest_rank_percentile(std::span<const double> samples, double q) {
  if (samples.empty()) throw InvalidArgument("percentile of an empty sample set");
  if (!(q > 0.0 && q <= 1.0)) throw InvalidArgument("percentile rank must lie in (0, 1]");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  // 0.9 * 10 evaluates to 9.000000000000002 in binary floating point; the
  // epsilon keeps exact products on their integer rank.
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size()) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

LatencyStats latency_stats(std::span<const double> samples) {
  if (samples.empty()) throw InvalidArgument("latency statistics need at least one sample");
  LatencyStats s;
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  s.min = *lo;
  s.max = *hi;
  s.p90 = nearest_rank_percentile(samples, 0.9);
  s.avg = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  s.avg_within_p90 = s.avg <= s.p90;
  return s;
}

}  // namespace xstack
