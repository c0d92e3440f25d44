#pragma once

#include <vector>

#include "vln/core/common.hpp"

namespace vln::eval {

struct EpisodeResult {
  bool success = false;
  bool oracle_success = false;
  real path_length = 0.0;       // meters actually translated
  real shortest_length = 0.0;   // geodesic(start, goal)
  real final_distance = 0.0;    // geodesic(final pose, goal)
  int steps = 0;

  real spl() const {
    if (!success) return 0.0;
    const real denom = std::max(shortest_length, path_length);
    return denom > 0.0 ? shortest_length / denom : 1.0;
  }
};

struct MetricsSummary {
  real sr = 0.0;   // %
  real osr = 0.0;  // %
  real spl = 0.0;  // %
  real dts = 0.0;  // meters
  int episodes = 0;
};

MetricsSummary summarize(const std::vector<EpisodeResult>& results);

// Spearman rank correlation (average ranks for ties).
real spearman(const std::vector<real>& a, const std::vector<real>& b);

}  // namespace vln::eval
