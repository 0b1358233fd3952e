#pragma once

#include <limits>
#include <vector>

#include "crowdnav/geometry.hpp"

// Test-only oracle: exact K-means by exhaustive enumeration of all set
// partitions into exactly k non-empty clusters (restricted growth strings).
// Independent of the production clustering path.
namespace oracle {

inline double partition_wss(const std::vector<crowdnav::Vec2>& pts,
                            const std::vector<int>& assign, int k) {
  std::vector<crowdnav::Vec2> sum(static_cast<std::size_t>(k));
  std::vector<int> count(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    sum[static_cast<std::size_t>(assign[i])] += pts[i];
    ++count[static_cast<std::size_t>(assign[i])];
  }
  double wss = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const crowdnav::Vec2 c = sum[static_cast<std::size_t>(assign[i])] /
                             count[static_cast<std::size_t>(assign[i])];
    wss += (pts[i] - c).norm_sq();
  }
  return wss;
}

inline void enumerate_partitions(const std::vector<crowdnav::Vec2>& pts, int k,
                                 std::vector<int>& assign, std::size_t i,
                                 int used, double& best) {
  const int n = static_cast<int>(pts.size());
  if (k - used > n - static_cast<int>(i)) return;  // cannot fill all clusters
  if (i == pts.size()) {
    if (used == k) best = std::min(best, partition_wss(pts, assign, k));
    return;
  }
  for (int c = 0; c < std::min(used + 1, k); ++c) {
    assign[i] = c;
    enumerate_partitions(pts, k, assign, i + 1, std::max(used, c + 1), best);
  }
}

// Minimal WSS over all partitions into exactly k non-empty clusters;
// +inf when k exceeds the number of points.
inline double exact_min_wss(const std::vector<crowdnav::Vec2>& pts, int k) {
  double best = std::numeric_limits<double>::infinity();
  if (k <= 0 || static_cast<std::size_t>(k) > pts.size()) return best;
  std::vector<int> assign(pts.size(), 0);
  enumerate_partitions(pts, k, assign, 0, 0, best);
  return best;
}

}  // namespace oracle
