#pragma once

#include <vector>

#include "crowdnav/geometry.hpp"

namespace crowdnav {

struct Cluster {
  Vec2 mean;
  int support = 0;
};

struct ClusterResult {
  std::vector<Cluster> clusters;
  double wss = 0.0;
  // wss_curve[k-1] is the converged WSS of the k-cluster run
  std::vector<double> wss_curve;
};

// Deterministic, permutation-invariant K-means over 2D velocity samples with
// elbow model selection: tries k = 1..max_k, keeps the smallest k whose WSS
// falls below wss_threshold, otherwise the smallest k where adding a cluster
// stops paying (relative WSS drop < rel_drop), otherwise max_k.
//
// Runs are chained: the k+1 run starts from the converged k centroids plus
// the farthest sample, which makes WSS(k) non-increasing in k by
// construction. Samples are processed in sorted order, so any permutation of
// the input produces bit-identical cluster means.
ClusterResult cluster_cell(const std::vector<Vec2>& samples, int max_k,
                           double wss_threshold, double rel_drop = 0.25);

}  // namespace crowdnav
