#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crowdnav/geometry.hpp"

namespace crowdnav {

struct Obstacle {
  enum class Shape { kRect, kCircle };
  Shape shape = Shape::kRect;
  // rect: (x, y) is the min corner, w/h the side lengths
  // circle: (x, y) is the centre, r the radius
  double x = 0.0, y = 0.0;
  double w = 0.0, h = 0.0;
  double r = 0.0;

  bool contains(const Vec2& p) const;
  // Euclidean distance from p to the obstacle boundary; 0 inside.
  double distance(const Vec2& p) const;
  // Closest boundary point to p (used for repulsion direction).
  Vec2 closest_point(const Vec2& p) const;
  bool blocks_segment(const Vec2& a, const Vec2& b) const;

  static Obstacle rect(double x, double y, double w, double h);
  static Obstacle circle(double cx, double cy, double r);
};

struct Lane {
  std::vector<Vec2> waypoints;
  double rate = 1.0;          // agents/s weighting used to apportion the crowd
  bool bidirectional = false;

  double length() const;
};

struct Scenario {
  std::string name;
  double width = 0.0;   // extent, metres
  double height = 0.0;
  std::vector<Obstacle> obstacles;
  std::vector<Lane> lanes;
  double density = 0.0;              // target agents per m^2
  Pose2 robot_start;
  Vec2 robot_goal;
  std::uint64_t seed = 0;

  bool in_extent(const Vec2& p) const {
    return p.x >= 0.0 && p.y >= 0.0 && p.x <= width && p.y <= height;
  }
  int target_agent_count() const;
};

// Parses and fully validates a scenario JSON document. Unknown keys are
// rejected. Throws ParseError on malformed JSON, ValidationError on
// semantic violations (message names the offending field).
Scenario load_scenario(const std::string& config_text);
Scenario load_scenario_file(const std::string& path);

std::string scenario_to_json(const Scenario& s);

}  // namespace crowdnav
