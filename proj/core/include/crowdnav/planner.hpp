#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "crowdnav/flow_map.hpp"
#include "crowdnav/geometry.hpp"

namespace crowdnav {

struct GridCellId {
  int i = 0;
  int j = 0;
  bool operator==(const GridCellId& o) const { return i == o.i && j == o.j; }
};

// Which cell's flow components price an edge. Default is the edge's target
// cell; source-cell pricing is exposed for comparison.
enum class CellCostSource { kTarget, kSource };

struct CostWeights {
  double w_rc = 1.0;    // resistance weight
  double w_lc = 0.5;    // lubricating weight
  double eps_min = 0.05;  // minimum edge-cost fraction of the move length
  bool scale_by_speed = false;  // use speed-scaled flow vectors in RC/LC
  CellCostSource cost_source = CellCostSource::kTarget;
};

struct GridPath {
  std::vector<GridCellId> cells;
  double total_cost = 0.0;
  std::vector<Vec2> world_points;  // cell centres
  // per-cell cost of the edge entering that cell (0 for the first)
  std::vector<double> edge_costs;
};

// RC = sum_i v . (-f_i): positive against the flow, negative with it.
double resistance_cost(const Vec2& v_robot, const FlowCell& cell,
                       bool scale_by_speed = false);
// LC = sum_i |v x f_i| >= 0: penalises motion perpendicular to flow.
double lubricating_cost(const Vec2& v_robot, const FlowCell& cell,
                        bool scale_by_speed = false);

// Crowd-aware cost of one 8-neighbourhood move against a cell's flow set:
//   cost = max(eps_min * |v|, |v| + w_rc * RC + w_lc * LC)
// f_i are unit bin-centre directions unless scale_by_speed is set.
double edge_cost(const Vec2& v_robot, const FlowCell& cell, const CostWeights& weights);

// Octile distance in cell units.
double octile_distance(const GridCellId& a, const GridCellId& b);

// 8-connected A* over the flow map. social=true prices edges with edge_cost
// (heuristic eps_min * octile, consistent for the clamped cost); social=false
// is the plain shortest-path baseline that ignores flow entirely.
// `blocked`, when non-empty, marks untraversable cells (flat-indexed).
std::optional<GridPath> plan_astar(const CrowdFlowMap& map, GridCellId start,
                                   GridCellId goal, const CostWeights& weights,
                                   bool social,
                                   const std::vector<std::uint8_t>& blocked = {},
                                   std::uint64_t* expansions = nullptr);

// D* Lite incremental planner: plan once, then repair after cell flow
// changes and/or start moves. Repaired paths cost the same as a from-scratch
// social A* on the current map.
class DStarPlanner {
 public:
  DStarPlanner(const CrowdFlowMap& map, GridCellId start, GridCellId goal,
               CostWeights weights);
  ~DStarPlanner();
  DStarPlanner(DStarPlanner&&) noexcept;
  DStarPlanner& operator=(DStarPlanner&&) noexcept;

  std::optional<GridPath> plan();
  // `changed_cells` are flat indices of cells whose components changed since
  // the last plan/replan call.
  std::optional<GridPath> replan(const std::vector<int>& changed_cells,
                                 GridCellId new_start);

  // vertices whose g-value was rewritten (expansion work, not queue pops)
  std::uint64_t expansions() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct FollowParams {
  double v_max = 1.0;          // m/s
  double lookahead = 1.5;      // m, pure-pursuit target distance
  double goal_tolerance = 0.3; // m, stop radius around the path end
  double avoid_range = 1.5;    // m
  double avoid_half_angle = M_PI / 3.0;  // rad, avoidance cone half-angle
  double stop_distance = 0.6;  // m, forward speed reaches zero here
  double closing_gate = 0.05;  // m/s, ignore pedestrians we are not closing on
};

// Pure pursuit along the path from the believed pose, with cone-based
// reactive avoidance of the nearest closing pedestrian: inside the cone the
// forward speed scales with distance (zero at stop_distance) and a
// tangential slide is added. Pedestrians we are not closing on, such as
// co-flow neighbours at matched pace, do not trigger the manoeuvre. The
// command magnitude never exceeds v_max; within goal_tolerance of the path
// end the command is zero. `avoiding`, when given, reports whether the
// avoidance rule fired.
Vec2 follow(std::span<const Vec2> path_points, const Pose2& believed_pose,
            std::span<const PedestrianTrack> pedestrians, const FollowParams& params,
            bool* avoiding = nullptr);

}  // namespace crowdnav
