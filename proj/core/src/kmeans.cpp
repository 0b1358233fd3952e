#include "crowdnav/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace crowdnav {

namespace {

bool lex_less(const Vec2& a, const Vec2& b) {
  return a.x < b.x || (a.x == b.x && a.y < b.y);
}

double wss_of(const std::vector<Vec2>& pts, const std::vector<Vec2>& centroids,
              const std::vector<int>& assign) {
  double wss = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    wss += (pts[i] - centroids[static_cast<std::size_t>(assign[i])]).norm_sq();
  }
  return wss;
}

// Index of the sample farthest from its nearest centroid; ties broken by
// lexicographically smallest sample so the choice is order-independent.
std::size_t farthest_sample(const std::vector<Vec2>& pts,
                            const std::vector<Vec2>& centroids) {
  std::size_t best = 0;
  double best_d = -1.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double d = std::numeric_limits<double>::infinity();
    for (const Vec2& c : centroids) d = std::min(d, (pts[i] - c).norm_sq());
    if (d > best_d || (d == best_d && lex_less(pts[i], pts[best]))) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

void assign_points(const std::vector<Vec2>& pts, const std::vector<Vec2>& centroids,
                   std::vector<int>& assign) {
  for (std::size_t i = 0; i < pts.size(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const double d = (pts[i] - centroids[c]).norm_sq();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    assign[i] = best;
  }
}

// Lloyd iterations to an assignment fixpoint (or 50 rounds). Empty clusters
// are re-seeded at the sample farthest from its current centroid, which can
// only lower the objective.
double lloyd(const std::vector<Vec2>& pts, std::vector<Vec2>& centroids,
             std::vector<int>& assign) {
  const int k = static_cast<int>(centroids.size());
  std::vector<int> prev(pts.size(), -1);
  for (int iter = 0; iter < 50; ++iter) {
    assign_points(pts, centroids, assign);

    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int a : assign) ++counts[static_cast<std::size_t>(a)];
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d =
            (pts[i] - centroids[static_cast<std::size_t>(assign[i])]).norm_sq();
        if (d > far_d || (d == far_d && lex_less(pts[i], pts[far]))) {
          far_d = d;
          far = i;
        }
      }
      centroids[static_cast<std::size_t>(c)] = pts[far];
      assign_points(pts, centroids, assign);
      counts.assign(static_cast<std::size_t>(k), 0);
      for (int a : assign) ++counts[static_cast<std::size_t>(a)];
    }

    if (assign == prev) break;
    prev = assign;

    std::vector<Vec2> sums(static_cast<std::size_t>(k));
    counts.assign(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      sums[static_cast<std::size_t>(assign[i])] += pts[i];
      ++counts[static_cast<std::size_t>(assign[i])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids[static_cast<std::size_t>(c)] =
            sums[static_cast<std::size_t>(c)] / counts[static_cast<std::size_t>(c)];
      }
    }
  }
  assign_points(pts, centroids, assign);
  return wss_of(pts, centroids, assign);
}

}  // namespace

ClusterResult cluster_cell(const std::vector<Vec2>& samples, int max_k,
                           double wss_threshold, double rel_drop) {
  ClusterResult out;
  if (samples.empty() || max_k < 1) return out;

  std::vector<Vec2> pts = samples;
  std::sort(pts.begin(), pts.end(), lex_less);

  int distinct = 1;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (!(pts[i] == pts[i - 1])) ++distinct;
  }
  const int k_max = std::min({max_k, static_cast<int>(pts.size()), distinct});

  struct Run {
    std::vector<Vec2> centroids;
    std::vector<int> assign;
    double wss = 0.0;
  };
  std::vector<Run> runs;

  std::vector<Vec2> centroids;
  {
    Vec2 sum;
    for (const Vec2& p : pts) sum += p;
    centroids.push_back(sum / static_cast<double>(pts.size()));
  }
  for (int k = 1; k <= k_max; ++k) {
    if (k > 1) centroids.push_back(pts[farthest_sample(pts, centroids)]);
    Run run;
    run.centroids = centroids;
    run.assign.resize(pts.size());
    run.wss = lloyd(pts, run.centroids, run.assign);
    centroids = run.centroids;
    out.wss_curve.push_back(run.wss);
    runs.push_back(std::move(run));
  }

  int chosen = k_max;
  bool found = false;
  for (int k = 1; k <= k_max && !found; ++k) {
    if (out.wss_curve[static_cast<std::size_t>(k - 1)] <= wss_threshold) {
      chosen = k;
      found = true;
    }
  }
  for (int k = 1; k < k_max && !found; ++k) {
    const double w = out.wss_curve[static_cast<std::size_t>(k - 1)];
    const double w_next = out.wss_curve[static_cast<std::size_t>(k)];
    if (w > 0.0 && (w - w_next) / w < rel_drop) {
      chosen = k;
      found = true;
    }
  }

  const Run& run = runs[static_cast<std::size_t>(chosen - 1)];
  std::vector<int> counts(run.centroids.size(), 0);
  for (int a : run.assign) ++counts[static_cast<std::size_t>(a)];
  for (std::size_t c = 0; c < run.centroids.size(); ++c) {
    if (counts[c] > 0) out.clusters.push_back({run.centroids[c], counts[c]});
  }
  out.wss = run.wss;
  return out;
}

}  // namespace crowdnav
