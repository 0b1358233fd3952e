#include <cmath>
#include <limits>

#include "crowdnav/planner.hpp"

namespace crowdnav {

Vec2 follow(std::span<const Vec2> path_points, const Pose2& believed_pose,
            std::span<const PedestrianTrack> pedestrians, const FollowParams& params,
            bool* avoiding) {
  if (avoiding) *avoiding = false;
  if (path_points.empty()) return {0.0, 0.0};

  const Vec2 pos = believed_pose.position();
  if ((path_points.back() - pos).norm() < params.goal_tolerance) return {0.0, 0.0};

  // first path point at least lookahead away; fall back to the path end
  Vec2 target = path_points.back();
  for (const Vec2& p : path_points) {
    if ((p - pos).norm() >= params.lookahead) {
      target = p;
      break;
    }
  }
  const Vec2 desired = (target - pos).normalized();
  if (desired.norm() == 0.0) return {0.0, 0.0};
  const Vec2 intended = desired * params.v_max;

  // Closing pedestrians inside the avoidance cone each propose a forward
  // speed (brake toward the pedestrian's own pace, scaling only the speed
  // surplus) and, once braking gets firm, a perpendicular slide. Distances
  // shrink by a short prediction horizon so fast head-on approaches brake
  // earlier than slow overtakes. Blending with min/sum keeps the command
  // continuous when the governing threat switches.
  constexpr double kPredictionHorizon = 0.4;  // s
  bool engaged = false;
  double forward = params.v_max;
  Vec2 slide_sum;
  for (const PedestrianTrack& ped : pedestrians) {
    const double d = ped.offset.norm();
    if (d > params.avoid_range || d == 0.0) continue;
    const double cos_ang = desired.dot(ped.offset) / d;
    if (cos_ang < std::cos(params.avoid_half_angle)) continue;
    const double closing = -(ped.offset.dot(ped.velocity - intended)) / d;
    if (closing < params.closing_gate) continue;
    engaged = true;
    const double d_eff = std::max(0.0, d - closing * kPredictionHorizon);
    const double scale = std::clamp(
        (d_eff - params.stop_distance) / (params.avoid_range - params.stop_distance),
        0.0, 1.0);
    const double ped_along = std::clamp(ped.velocity.dot(desired), 0.0, params.v_max);
    forward = std::min(forward, ped_along + scale * (params.v_max - ped_along));
    const double slide_weight = std::clamp(0.75 - scale, 0.0, 1.0);
    if (slide_weight > 0.0) {
      const Vec2 ray = ped.offset / d;
      // dead-ahead falls back to the left perpendicular
      Vec2 tangent = desired - ray * desired.dot(ray);
      if (tangent.norm() < 1e-9) tangent = ray.perp();
      slide_sum += tangent.normalized() * slide_weight;
    }
  }

  Vec2 cmd = intended;
  if (engaged) {
    if (avoiding) *avoiding = true;
    Vec2 slide = slide_sum;
    if (slide.norm() > 1.0) slide = slide.normalized();
    cmd = desired * forward + slide * params.v_max;
    const double mag = cmd.norm();
    if (mag > params.v_max) cmd = cmd * (params.v_max / mag);
  }
  return cmd;
}

}  // namespace crowdnav
