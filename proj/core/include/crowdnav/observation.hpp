#pragma once

#include <cstdint>
#include <optional>

#include "crowdnav/geometry.hpp"

namespace crowdnav {

// Which frame an observation's start/direction are expressed in.
enum class ObsFrame { kGlobal, kRobot };

// A pedestrian as seen by the reactive safety layer: offset relative to the
// robot and absolute velocity, both world-aligned.
struct PedestrianTrack {
  Vec2 offset;
  Vec2 velocity;
};

// One pedestrian's movement over the last observation window (1 s):
// start point, path length and heading of the displacement.
struct MovementObservation {
  Vec2 start;                // metres
  double length = 0.0;       // metres, >= 0
  double direction = 0.0;    // rad, normalized to (-pi, pi]
  std::uint32_t pedestrian_id = 0;
  double t = 0.0;            // s
  ObsFrame frame = ObsFrame::kGlobal;

  // Displacement / window length as a velocity vector.
  Vec2 velocity(double window_s) const {
    return Vec2{std::cos(direction), std::sin(direction)} * (length / window_s);
  }
};

// Re-expresses a robot-frame observation in the global frame of `pose`.
inline MovementObservation to_global(const MovementObservation& obs, const Pose2& pose) {
  MovementObservation out = obs;
  out.start = pose.transform_point(obs.start);
  out.direction = normalize_angle(obs.direction + pose.theta);
  out.frame = ObsFrame::kGlobal;
  return out;
}

// Movement observation from a window's endpoint positions; nullopt when the
// implied speed exceeds the sanity bound.
inline std::optional<MovementObservation> observation_from_window(
    const Vec2& p0, const Vec2& p1, double window_s, double max_speed,
    std::uint32_t pedestrian_id, double t) {
  const Vec2 d = p1 - p0;
  const double len = d.norm();
  if (len / window_s > max_speed) return std::nullopt;
  MovementObservation obs;
  obs.start = p0;
  obs.length = len;
  obs.direction = d.angle();
  obs.pedestrian_id = pedestrian_id;
  obs.t = t;
  obs.frame = ObsFrame::kGlobal;
  return obs;
}

}  // namespace crowdnav
