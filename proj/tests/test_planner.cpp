#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "crowdnav/planner.hpp"
#include "crowdnav/rng.hpp"
#include "support/dijkstra_oracle.hpp"

using namespace crowdnav;

namespace {

FlowCell cell_with_bins(std::initializer_list<int> bins) {
  FlowCell cell;
  for (int b : bins) cell.components.push_back({b, 1.0, 4});
  return cell;
}

CrowdFlowMap random_flow_map(Rng& rng, int w, int h, double fill = 0.5) {
  CrowdFlowMap map({0, 0}, 1.0, w, h);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      if (rng.uniform() > fill) continue;
      FlowCell& cell = map.cell_mutable(i, j);
      const int n = rng.uniform_int(1, 3);
      std::set<int> bins;
      while (static_cast<int>(bins.size()) < n) bins.insert(rng.uniform_int(0, 7));
      for (int b : bins) cell.components.push_back({b, rng.uniform(0.3, 1.5), 4});
    }
  }
  return map;
}

void mutate_cell(CrowdFlowMap& map, Rng& rng, int i, int j) {
  FlowCell& cell = map.cell_mutable(i, j);
  cell.components.clear();
  const int n = rng.uniform_int(0, 3);
  std::set<int> bins;
  while (static_cast<int>(bins.size()) < n) bins.insert(rng.uniform_int(0, 7));
  for (int b : bins) cell.components.push_back({b, rng.uniform(0.3, 1.5), 4});
}

double recomputed_path_cost(const CrowdFlowMap& map, const GridPath& path,
                            const CostWeights& weights) {
  double total = 0.0;
  for (std::size_t k = 1; k < path.cells.size(); ++k) {
    const Vec2 move{static_cast<double>(path.cells[k].i - path.cells[k - 1].i),
                    static_cast<double>(path.cells[k].j - path.cells[k - 1].j)};
    total += edge_cost(move, map.cell(path.cells[k].i, path.cells[k].j), weights);
  }
  return total;
}

}  // namespace

TEST_CASE("edge cost suite") {
  const CostWeights w;  // w_rc = 1, w_lc = 0.5, eps_min = 0.05
  const FlowCell empty;
  CHECK(edge_cost({1, 0}, empty, w) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(edge_cost({1, 1}, empty, w) == doctest::Approx(M_SQRT2).epsilon(1e-9));

  // aligned flow: raw cost 1 + (-1) = 0, clamped to eps_min
  CHECK(edge_cost({1, 0}, cell_with_bins({0}), w) == doctest::Approx(0.05).epsilon(1e-9));
  // perpendicular flow: RC = 0, LC = 1
  CHECK(edge_cost({1, 0}, cell_with_bins({2}), w) == doctest::Approx(1.5).epsilon(1e-9));
  // opposing flow: RC = +1
  CHECK(edge_cost({1, 0}, cell_with_bins({4}), w) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("RC/LC algebra") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    FlowCell cell;
    const int n = rng.uniform_int(1, 4);
    std::set<int> bins;
    while (static_cast<int>(bins.size()) < n) bins.insert(rng.uniform_int(0, 7));
    for (int b : bins) cell.components.push_back({b, rng.uniform(0.2, 2.0), 2});

    const int d = rng.uniform_int(0, 7);
    static const int di[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    static const int dj[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    const Vec2 v{static_cast<double>(di[d]), static_cast<double>(dj[d])};
    const Vec2 nv = v * -1.0;

    CHECK(resistance_cost(v, cell) == doctest::Approx(-resistance_cost(nv, cell)).epsilon(1e-12));
    CHECK(lubricating_cost(v, cell) == doctest::Approx(lubricating_cost(nv, cell)).epsilon(1e-12));
    CHECK(lubricating_cost(v, cell) >= 0.0);
  }

  // LC vanishes exactly when the move is parallel to the flow
  CHECK(lubricating_cost({1, 0}, cell_with_bins({0})) == doctest::Approx(0.0));
  CHECK(lubricating_cost({1, 0}, cell_with_bins({4})) == doctest::Approx(0.0));
  CHECK(lubricating_cost({1, 0}, cell_with_bins({1})) > 0.0);
  CHECK(lubricating_cost({1, 1}, cell_with_bins({1})) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("A* on an empty map goes straight") {
  CrowdFlowMap map({0, 0}, 1.0, 5, 5);
  const auto path = plan_astar(map, {0, 0}, {3, 0}, CostWeights{}, true);
  REQUIRE(path.has_value());
  CHECK(path->total_cost == doctest::Approx(3.0));
  REQUIRE(path->cells.size() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(path->cells[static_cast<std::size_t>(k)].i == k);
    CHECK(path->cells[static_cast<std::size_t>(k)].j == 0);
  }
  CHECK(path->world_points[0].x == doctest::Approx(0.5));
}

TEST_CASE("social A* detours through aligned flow when cheaper") {
  CrowdFlowMap map({0, 0}, 1.0, 10, 6);
  for (int i = 2; i <= 7; ++i) {
    map.cell_mutable(i, 2).components.push_back({4, 1.0, 4});  // opposing on the direct row
    map.cell_mutable(i, 3).components.push_back({0, 1.0, 4});  // aligned one row up
  }
  const CostWeights w;
  const auto social = plan_astar(map, {0, 2}, {9, 2}, w, true);
  REQUIRE(social.has_value());
  const double oracle_cost = oracle::dijkstra_cost(map, {0, 2}, {9, 2}, w, true);
  CHECK(social->total_cost == doctest::Approx(oracle_cost).epsilon(1e-9));
  bool used_aligned_row = false;
  for (const GridCellId& c : social->cells) used_aligned_row |= (c.j == 3);
  CHECK(used_aligned_row);

  // the shortest baseline ignores flow entirely
  const auto shortest = plan_astar(map, {0, 2}, {9, 2}, w, false);
  REQUIRE(shortest.has_value());
  CHECK(shortest->total_cost == doctest::Approx(9.0));
  for (const GridCellId& c : shortest->cells) CHECK(c.j == 2);
}

TEST_CASE("empty-map social cost equals shortest cost") {
  Rng rng(7);
  CrowdFlowMap map({0, 0}, 1.0, 12, 9);
  const CostWeights w;
  for (int trial = 0; trial < 100; ++trial) {
    const GridCellId start{rng.uniform_int(0, 11), rng.uniform_int(0, 8)};
    GridCellId goal{rng.uniform_int(0, 11), rng.uniform_int(0, 8)};
    if (start == goal) goal.i = (goal.i + 1) % 12;
    const auto social = plan_astar(map, start, goal, w, true);
    const auto shortest = plan_astar(map, start, goal, w, false);
    REQUIRE(social.has_value());
    REQUIRE(shortest.has_value());
    CHECK(social->total_cost == doctest::Approx(shortest->total_cost).epsilon(1e-9));
  }
}

TEST_CASE("A* equals the Dijkstra oracle on random flow maps") {
  Rng rng(11);
  const CostWeights w;
  for (int trial = 0; trial < 60; ++trial) {
    CrowdFlowMap map = random_flow_map(rng, 10, 10);
    const GridCellId start{rng.uniform_int(0, 9), rng.uniform_int(0, 9)};
    GridCellId goal{rng.uniform_int(0, 9), rng.uniform_int(0, 9)};
    if (start == goal) goal.j = (goal.j + 1) % 10;
    const auto path = plan_astar(map, start, goal, w, true);
    REQUIRE(path.has_value());
    CHECK(path->total_cost ==
          doctest::Approx(oracle::dijkstra_cost(map, start, goal, w, true)).epsilon(1e-9));

    // path validity: 8-adjacency, endpoints, additive cost
    CHECK(path->cells.front() == start);
    CHECK(path->cells.back() == goal);
    for (std::size_t k = 1; k < path->cells.size(); ++k) {
      const int di = std::abs(path->cells[k].i - path->cells[k - 1].i);
      const int dj = std::abs(path->cells[k].j - path->cells[k - 1].j);
      CHECK(std::max(di, dj) == 1);
    }
    CHECK(path->total_cost ==
          doctest::Approx(recomputed_path_cost(map, *path, w)).epsilon(1e-9));
  }
}

TEST_CASE("blocked wall makes the goal unreachable") {
  CrowdFlowMap map({0, 0}, 1.0, 7, 7);
  std::vector<std::uint8_t> blocked(49, 0);
  for (int j = 0; j < 7; ++j) blocked[static_cast<std::size_t>(j) * 7 + 3] = 1;
  const auto path = plan_astar(map, {0, 3}, {6, 3}, CostWeights{}, false, blocked);
  CHECK_FALSE(path.has_value());
  const auto open_path = plan_astar(map, {0, 3}, {6, 3}, CostWeights{}, false);
  CHECK(open_path.has_value());
}

TEST_CASE("D* Lite: no-op replan, single mutation repair") {
  Rng rng(13);
  CrowdFlowMap map = random_flow_map(rng, 20, 20);
  const CostWeights w;
  const GridCellId start{1, 1}, goal{18, 17};

  DStarPlanner dstar(map, start, goal, w);
  const auto first = dstar.plan();
  REQUIRE(first.has_value());
  CHECK(first->total_cost ==
        doctest::Approx(oracle::dijkstra_cost(map, start, goal, w, true)).epsilon(1e-9));

  SUBCASE("no changes, same start: identical path, zero expansions") {
    const std::uint64_t before = dstar.expansions();
    const auto again = dstar.replan({}, start);
    REQUIRE(again.has_value());
    CHECK(dstar.expansions() == before);
    REQUIRE(again->cells.size() == first->cells.size());
    for (std::size_t k = 0; k < again->cells.size(); ++k) {
      CHECK(again->cells[k] == first->cells[k]);
    }
  }

  SUBCASE("opposing flow dropped onto the path forces a cheaper-than-fresh repair") {
    // mutate a mid-path cell to oppose the travel direction
    const GridCellId mid = first->cells[first->cells.size() / 2];
    FlowCell& cell = map.cell_mutable(mid.i, mid.j);
    cell.components.clear();
    cell.components.push_back({4, 1.0, 4});
    cell.components.push_back({0, 1.0, 4});

    const std::uint64_t before = dstar.expansions();
    const auto repaired = dstar.replan({static_cast<int>(map.flat(mid.i, mid.j))}, start);
    REQUIRE(repaired.has_value());
    const std::uint64_t incremental = dstar.expansions() - before;

    const auto fresh = plan_astar(map, start, goal, w, true);
    REQUIRE(fresh.has_value());
    CHECK(repaired->total_cost == doctest::Approx(fresh->total_cost).epsilon(1e-9));

    DStarPlanner from_scratch(map, start, goal, w);
    REQUIRE(from_scratch.plan().has_value());
    CHECK(incremental < from_scratch.expansions());
  }
}

TEST_CASE("D* Lite randomized oracle equivalence with moving start") {
  Rng rng(17);
  const CostWeights w;
  for (int trial = 0; trial < 20; ++trial) {
    CrowdFlowMap map = random_flow_map(rng, 20, 20);
    GridCellId start{rng.uniform_int(0, 19), rng.uniform_int(0, 19)};
    GridCellId goal{rng.uniform_int(0, 19), rng.uniform_int(0, 19)};
    if (start == goal) goal.i = (goal.i + 3) % 20;

    DStarPlanner dstar(map, start, goal, w);
    auto path = dstar.plan();
    REQUIRE(path.has_value());

    for (int step = 0; step < 5; ++step) {
      const int ci = rng.uniform_int(0, 19);
      const int cj = rng.uniform_int(0, 19);
      mutate_cell(map, rng, ci, cj);
      // advance the start along the current path now and then
      if (step % 2 == 1 && path->cells.size() > 2) start = path->cells[1];
      path = dstar.replan({static_cast<int>(map.flat(ci, cj))}, start);
      REQUIRE(path.has_value());
      const double expected = oracle::dijkstra_cost(map, start, goal, w, true);
      CHECK(path->total_cost == doctest::Approx(expected).epsilon(1e-9));
    }
  }
}

TEST_CASE("follower behaviour") {
  const FollowParams fp;
  const std::vector<Vec2> straight{{0.5, 0.5}, {1.5, 0.5}, {2.5, 0.5},
                                   {3.5, 0.5}, {4.5, 0.5}, {5.5, 0.5}};

  SUBCASE("no pedestrians: full speed toward the lookahead point") {
    bool avoiding = true;
    const Vec2 cmd = follow(straight, {0.5, 0.5, 0.0}, {}, fp, &avoiding);
    CHECK_FALSE(avoiding);
    CHECK(cmd.norm() == doctest::Approx(fp.v_max));
    CHECK(cmd.angle() == doctest::Approx(0.0));
  }

  SUBCASE("pedestrian dead ahead scales speed and adds a tangential slide") {
    bool avoiding = false;
    const std::vector<PedestrianTrack> peds{{{0.5, 0.0}, {0.0, 0.0}}};
    const Vec2 cmd = follow(straight, {0.5, 0.5, 0.0}, peds, fp, &avoiding);
    CHECK(avoiding);
    // forward component limited by the distance ratio
    CHECK(cmd.x <= (0.5 / fp.avoid_range) * fp.v_max + 1e-9);
    CHECK(std::abs(cmd.y) > 0.0);
    CHECK(cmd.norm() <= fp.v_max + 1e-9);
  }

  SUBCASE("pedestrian outside the cone is ignored") {
    bool avoiding = true;
    const std::vector<PedestrianTrack> peds{{{-0.5, 0.0}, {0.0, 0.0}}};  // behind
    const Vec2 cmd = follow(straight, {0.5, 0.5, 0.0}, peds, fp, &avoiding);
    CHECK_FALSE(avoiding);
    CHECK(cmd.norm() == doctest::Approx(fp.v_max));
  }

  SUBCASE("co-flow pedestrian at matched pace does not trigger avoidance") {
    bool avoiding = true;
    const std::vector<PedestrianTrack> peds{{{1.0, 0.0}, {fp.v_max, 0.0}}};
    const Vec2 cmd = follow(straight, {0.5, 0.5, 0.0}, peds, fp, &avoiding);
    CHECK_FALSE(avoiding);
    CHECK(cmd.norm() == doctest::Approx(fp.v_max));
  }

  SUBCASE("at the goal the command is zero") {
    const Vec2 cmd = follow(straight, {5.4, 0.5, 0.0}, {}, fp);
    CHECK(cmd.x == 0.0);
    CHECK(cmd.y == 0.0);
  }

  SUBCASE("command magnitude never exceeds v_max") {
    Rng rng(19);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<PedestrianTrack> peds;
      const int n = rng.uniform_int(0, 5);
      for (int k = 0; k < n; ++k) {
        peds.push_back({{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)},
                        {rng.uniform(-1.4, 1.4), rng.uniform(-1.4, 1.4)}});
      }
      const Pose2 pose{rng.uniform(0.0, 6.0), rng.uniform(-1.0, 2.0), rng.uniform(-M_PI, M_PI)};
      const Vec2 cmd = follow(straight, pose, peds, fp);
      CHECK(cmd.norm() <= fp.v_max + 1e-9);
    }
  }
}
