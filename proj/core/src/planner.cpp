#include "crowdnav/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace crowdnav {

namespace {

constexpr int kDi[8] = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr int kDj[8] = {0, 1, 1, 1, 0, -1, -1, -1};

}  // namespace

double resistance_cost(const Vec2& v_robot, const FlowCell& cell, bool scale_by_speed) {
  double rc = 0.0;
  for (const FlowComponent& c : cell.components) {
    Vec2 f = bin_unit(c.direction_bin);
    if (scale_by_speed) f = f * c.mean_speed;
    rc += v_robot.dot(f * -1.0);
  }
  return rc;
}

double lubricating_cost(const Vec2& v_robot, const FlowCell& cell, bool scale_by_speed) {
  double lc = 0.0;
  for (const FlowComponent& c : cell.components) {
    Vec2 f = bin_unit(c.direction_bin);
    if (scale_by_speed) f = f * c.mean_speed;
    lc += std::abs(v_robot.cross(f));
  }
  return lc;
}

double edge_cost(const Vec2& v_robot, const FlowCell& cell, const CostWeights& weights) {
  const double move_len = v_robot.norm();
  const double raw = move_len +
                     weights.w_rc * resistance_cost(v_robot, cell, weights.scale_by_speed) +
                     weights.w_lc * lubricating_cost(v_robot, cell, weights.scale_by_speed);
  return std::max(weights.eps_min * move_len, raw);
}

double octile_distance(const GridCellId& a, const GridCellId& b) {
  const double dx = std::abs(a.i - b.i);
  const double dy = std::abs(a.j - b.j);
  return std::max(dx, dy) + (M_SQRT2 - 1.0) * std::min(dx, dy);
}

std::optional<GridPath> plan_astar(const CrowdFlowMap& map, GridCellId start,
                                   GridCellId goal, const CostWeights& weights,
                                   bool social, const std::vector<std::uint8_t>& blocked,
                                   std::uint64_t* expansions) {
  if (!map.in_bounds(start.i, start.j) || !map.in_bounds(goal.i, goal.j)) {
    return std::nullopt;
  }
  const std::size_t n = static_cast<std::size_t>(map.width()) * map.height();
  const auto is_blocked = [&](std::size_t id) {
    return !blocked.empty() && blocked[id] != 0;
  };
  if (is_blocked(map.flat(start.i, start.j)) || is_blocked(map.flat(goal.i, goal.j))) {
    return std::nullopt;
  }

  const double h_scale = social ? weights.eps_min : 1.0;
  std::vector<double> g(n, std::numeric_limits<double>::infinity());
  std::vector<int> parent(n, -1);
  std::vector<std::uint8_t> closed(n, 0);

  using QItem = std::pair<double, int>;  // (f, flat id)
  std::priority_queue<QItem, std::vector<QItem>, std::greater<>> open;

  const int start_id = static_cast<int>(map.flat(start.i, start.j));
  const int goal_id = static_cast<int>(map.flat(goal.i, goal.j));
  g[static_cast<std::size_t>(start_id)] = 0.0;
  open.emplace(h_scale * octile_distance(start, goal), start_id);

  while (!open.empty()) {
    const auto [f, id] = open.top();
    open.pop();
    const std::size_t uid = static_cast<std::size_t>(id);
    if (closed[uid]) continue;
    closed[uid] = 1;
    if (expansions) ++*expansions;
    if (id == goal_id) break;

    const GridCellId u{id % map.width(), id / map.width()};
    for (int d = 0; d < 8; ++d) {
      const GridCellId v{u.i + kDi[d], u.j + kDj[d]};
      if (!map.in_bounds(v.i, v.j)) continue;
      const std::size_t vid = map.flat(v.i, v.j);
      if (closed[vid] || is_blocked(vid)) continue;
      const Vec2 move{static_cast<double>(kDi[d]), static_cast<double>(kDj[d])};
      double cost;
      if (!social) {
        cost = move.norm();
      } else {
        const GridCellId priced =
            weights.cost_source == CellCostSource::kTarget ? v : u;
        cost = edge_cost(move, map.cell(priced.i, priced.j), weights);
      }
      const double cand = g[uid] + cost;
      if (cand < g[vid]) {
        g[vid] = cand;
        parent[vid] = id;
        open.emplace(cand + h_scale * octile_distance(v, goal), static_cast<int>(vid));
      }
    }
  }

  if (!std::isfinite(g[static_cast<std::size_t>(goal_id)])) return std::nullopt;

  GridPath path;
  path.total_cost = g[static_cast<std::size_t>(goal_id)];
  std::vector<int> chain;
  for (int id = goal_id; id != -1; id = parent[static_cast<std::size_t>(id)]) {
    chain.push_back(id);
  }
  std::reverse(chain.begin(), chain.end());
  double prev_g = 0.0;
  for (int id : chain) {
    const GridCellId c{id % map.width(), id / map.width()};
    path.cells.push_back(c);
    path.world_points.push_back(map.cell_center(c.i, c.j));
    path.edge_costs.push_back(g[static_cast<std::size_t>(id)] - prev_g);
    prev_g = g[static_cast<std::size_t>(id)];
  }
  if (!path.edge_costs.empty()) path.edge_costs.front() = 0.0;
  return path;
}

}  // namespace crowdnav
