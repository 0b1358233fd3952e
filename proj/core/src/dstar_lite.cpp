#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "crowdnav/planner.hpp"

namespace crowdnav {

namespace {

constexpr int kDi[8] = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr int kDj[8] = {0, 1, 1, 1, 0, -1, -1, -1};
constexpr double kInf = std::numeric_limits<double>::infinity();

using Key = std::pair<double, double>;

}  // namespace

struct DStarPlanner::Impl {
  const CrowdFlowMap& map;
  CostWeights weights;
  GridCellId start, goal, last_start;
  double k_m = 0.0;
  std::uint64_t expansions = 0;

  std::vector<double> g, rhs;
  std::vector<std::uint32_t> version;   // current entry version per cell
  std::vector<std::uint8_t> in_queue;

  struct Entry {
    Key key;
    std::uint32_t version;
    int id;
    bool operator>(const Entry& o) const {
      return key > o.key || (key == o.key && id > o.id);
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;

  Impl(const CrowdFlowMap& m, GridCellId s, GridCellId t, CostWeights w)
      : map(m), weights(w), start(s), goal(t), last_start(s) {
    const std::size_t n = static_cast<std::size_t>(map.width()) * map.height();
    g.assign(n, kInf);
    rhs.assign(n, kInf);
    version.assign(n, 0);
    in_queue.assign(n, 0);
    rhs[flat(goal)] = 0.0;
    insert(static_cast<int>(flat(goal)));
  }

  std::size_t flat(GridCellId c) const { return map.flat(c.i, c.j); }
  GridCellId unflat(int id) const { return {id % map.width(), id / map.width()}; }

  double heuristic(GridCellId a, GridCellId b) const {
    return weights.eps_min * octile_distance(a, b);
  }

  double cost(GridCellId from, GridCellId to) const {
    const Vec2 move{static_cast<double>(to.i - from.i),
                    static_cast<double>(to.j - from.j)};
    const GridCellId priced =
        weights.cost_source == CellCostSource::kTarget ? to : from;
    return edge_cost(move, map.cell(priced.i, priced.j), weights);
  }

  Key key_of(int id) const {
    const std::size_t u = static_cast<std::size_t>(id);
    const double m = std::min(g[u], rhs[u]);
    return {m + heuristic(start, unflat(id)) + k_m, m};
  }

  void insert(int id) {
    const std::size_t u = static_cast<std::size_t>(id);
    ++version[u];
    in_queue[u] = 1;
    open.push({key_of(id), version[u], id});
  }

  void remove(int id) {
    const std::size_t u = static_cast<std::size_t>(id);
    ++version[u];
    in_queue[u] = 0;
  }

  void update_vertex(int id) {
    const std::size_t u = static_cast<std::size_t>(id);
    const bool inconsistent = g[u] != rhs[u];
    if (inconsistent) {
      insert(id);  // insert or reprioritize via a fresh versioned entry
    } else if (in_queue[u]) {
      remove(id);
    }
  }

  // Drops stale heap entries; returns false when the queue is empty.
  bool settle_top() {
    while (!open.empty()) {
      const Entry& e = open.top();
      const std::size_t u = static_cast<std::size_t>(e.id);
      if (in_queue[u] && e.version == version[u]) return true;
      open.pop();
    }
    return false;
  }

  void recompute_rhs(int id) {
    const std::size_t u = static_cast<std::size_t>(id);
    if (id == static_cast<int>(flat(goal))) return;
    const GridCellId c = unflat(id);
    double best = kInf;
    for (int d = 0; d < 8; ++d) {
      const GridCellId s{c.i + kDi[d], c.j + kDj[d]};
      if (!map.in_bounds(s.i, s.j)) continue;
      best = std::min(best, cost(c, s) + g[flat(s)]);
    }
    rhs[u] = best;
  }

  void compute_shortest_path() {
    const int start_id = static_cast<int>(flat(start));
    while (settle_top()) {
      const Entry top = open.top();
      const std::size_t u = static_cast<std::size_t>(top.id);
      const Key start_key = key_of(start_id);
      if (!(top.key < start_key) &&
          rhs[static_cast<std::size_t>(start_id)] <= g[static_cast<std::size_t>(start_id)]) {
        break;
      }
      const Key k_new = key_of(top.id);
      if (top.key < k_new) {
        open.pop();
        insert(top.id);
        continue;
      }
      open.pop();
      in_queue[u] = 0;
      ++version[u];
      const GridCellId c = unflat(top.id);
      if (g[u] > rhs[u]) {
        g[u] = rhs[u];
        ++expansions;
        for (int d = 0; d < 8; ++d) {
          const GridCellId p{c.i + kDi[d], c.j + kDj[d]};
          if (!map.in_bounds(p.i, p.j)) continue;
          const int pid = static_cast<int>(flat(p));
          if (pid != static_cast<int>(flat(goal))) {
            rhs[static_cast<std::size_t>(pid)] =
                std::min(rhs[static_cast<std::size_t>(pid)], cost(p, c) + g[u]);
          }
          update_vertex(pid);
        }
      } else {
        g[u] = kInf;
        ++expansions;
        recompute_rhs(top.id);
        update_vertex(top.id);
        for (int d = 0; d < 8; ++d) {
          const GridCellId p{c.i + kDi[d], c.j + kDj[d]};
          if (!map.in_bounds(p.i, p.j)) continue;
          const int pid = static_cast<int>(flat(p));
          recompute_rhs(pid);
          update_vertex(pid);
        }
      }
    }
  }

  std::optional<GridPath> extract() {
    const std::size_t n = g.size();
    // start may terminate unexpanded; rhs carries its converged distance
    if (!std::isfinite(rhs[flat(start)])) return std::nullopt;
    GridPath path;
    GridCellId cur = start;
    path.cells.push_back(cur);
    path.world_points.push_back(map.cell_center(cur.i, cur.j));
    path.edge_costs.push_back(0.0);
    double total = 0.0;
    std::size_t guard = 0;
    while (!(cur == goal)) {
      if (++guard > n) return std::nullopt;
      double best = kInf;
      double best_edge = 0.0;
      GridCellId next = cur;
      for (int d = 0; d < 8; ++d) {
        const GridCellId s{cur.i + kDi[d], cur.j + kDj[d]};
        if (!map.in_bounds(s.i, s.j)) continue;
        const double e = cost(cur, s);
        const double v = e + g[flat(s)];
        if (v < best) {
          best = v;
          best_edge = e;
          next = s;
        }
      }
      if (!std::isfinite(best)) return std::nullopt;
      cur = next;
      total += best_edge;
      path.cells.push_back(cur);
      path.world_points.push_back(map.cell_center(cur.i, cur.j));
      path.edge_costs.push_back(best_edge);
    }
    path.total_cost = total;
    return path;
  }
};

DStarPlanner::DStarPlanner(const CrowdFlowMap& map, GridCellId start, GridCellId goal,
                           CostWeights weights)
    : impl_(std::make_unique<Impl>(map, start, goal, weights)) {}

DStarPlanner::~DStarPlanner() = default;
DStarPlanner::DStarPlanner(DStarPlanner&&) noexcept = default;
DStarPlanner& DStarPlanner::operator=(DStarPlanner&&) noexcept = default;

std::optional<GridPath> DStarPlanner::plan() {
  impl_->compute_shortest_path();
  return impl_->extract();
}

std::optional<GridPath> DStarPlanner::replan(const std::vector<int>& changed_cells,
                                             GridCellId new_start) {
  Impl& d = *impl_;
  if (!(new_start == d.start)) {
    d.k_m += d.heuristic(d.last_start, new_start);
    d.last_start = new_start;
    d.start = new_start;
  }
  for (int id : changed_cells) {
    const GridCellId c = d.unflat(id);
    // edges into and out of a mutated cell may have new costs
    d.recompute_rhs(id);
    d.update_vertex(id);
    for (int dd = 0; dd < 8; ++dd) {
      const GridCellId p{c.i + kDi[dd], c.j + kDj[dd]};
      if (!d.map.in_bounds(p.i, p.j)) continue;
      const int pid = static_cast<int>(d.flat(p));
      d.recompute_rhs(pid);
      d.update_vertex(pid);
    }
  }
  d.compute_shortest_path();
  return d.extract();
}

std::uint64_t DStarPlanner::expansions() const { return impl_->expansions; }

}  // namespace crowdnav
