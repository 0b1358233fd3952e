#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "crowdnav/geometry.hpp"
#include "crowdnav/observation.hpp"
#include "crowdnav/rng.hpp"
#include "crowdnav/scenario.hpp"

namespace crowdnav {

// Odometry error model: per-step component stds scale with the commanded
// motion, so a stationary robot reports exact zero deltas.
struct OdomNoise {
  double trans_per_trans = 0.05;  // std per metre translated
  double rot_per_rot = 0.05;      // std per rad rotated
  double rot_per_trans = 0.002;   // rad std per metre translated
};

struct SimParams {
  double dt = 0.1;                 // s, fixed integration step
  double obs_window = 1.0;         // s, movement-observation window
  double goal_gain = 2.0;          // 1/s, relaxation toward preferred velocity
  double repulsion_a = 2.0;        // m/s^2
  double repulsion_b = 0.3;        // m
  double robot_repulsion_a = 6.0;  // m/s^2, pedestrians yield harder to the robot
  double robot_repulsion_b = 0.4;  // m
  double agent_radius = 0.25;      // m
  double pref_speed_min = 1.0;     // m/s
  double pref_speed_max = 1.3;     // m/s
  double waypoint_tolerance = 0.5; // m
  double respawn_jitter = 0.5;     // m
  double max_obs_speed = 3.0;      // m/s, observation sanity bound
  double robot_radius = 0.3;       // m
  double perception_range = 5.0;   // m
  OdomNoise odom_noise;

  int history_len() const {
    return static_cast<int>(std::lround(obs_window / dt)) + 1;
  }
};

struct AgentState {
  std::uint32_t id = 0;
  Vec2 position;
  Vec2 velocity;
  double preferred_speed = 1.2;
  double radius = 0.25;
  std::uint32_t lane_index = 0;
  std::uint32_t waypoint_index = 0;  // current target waypoint
  bool reverse = false;              // walking the lane back-to-front

  // position ring buffer, newest last; holds up to history_len() samples
  std::vector<Vec2> history;
};

struct RobotState {
  Pose2 true_pose;
  Pose2 odom_pose;
  Vec2 commanded_velocity;
  double radius = 0.3;
  double perception_range = 5.0;
};

// Deterministic 2D crowd world: social-force pedestrians on waypoint lanes,
// a holonomic robot with drifting odometry, range/occlusion-limited
// pedestrian sensing and a perfect bird-view oracle.
class World {
 public:
  explicit World(Scenario scenario, SimParams params = SimParams{});
  World(Scenario scenario, std::uint64_t seed, SimParams params = SimParams{});

  void set_command(const Vec2& v) { robot_.commanded_velocity = v; }
  void step(double dt);
  void step(const Vec2& command, double dt) { set_command(command); step(dt); }

  // Movement observations of pedestrians within perception range of the
  // robot's true position with a clear line of sight, expressed in the
  // robot body frame. Requires history_ready().
  std::vector<MovementObservation> sense_pedestrians() const;

  // One global-frame observation per pedestrian with a full window buffered;
  // no occlusion, no range limit, no noise.
  std::vector<MovementObservation> birdview_observations() const;

  // Last step's noisy body-frame odometry delta (dx, dy, dtheta).
  // Composing these deltas from the start pose reproduces odom_pose exactly.
  Pose2 read_odometry() const { return last_odom_delta_; }
  Pose2 last_true_delta() const { return last_true_delta_; }

  // Pedestrians within `range` of the robot and not hidden by an obstacle,
  // as relative tracks; feeds the reactive avoider.
  std::vector<PedestrianTrack> nearby_pedestrians(double range) const;

  bool history_ready() const;
  double time() const { return time_; }
  const Scenario& scenario() const { return scenario_; }
  const SimParams& params() const { return params_; }
  const std::vector<AgentState>& agents() const { return agents_; }
  std::vector<AgentState>& agents_mutable() { return agents_; }
  const RobotState& robot() const { return robot_; }
  RobotState& robot_mutable() { return robot_; }

  bool robot_in_obstacle() const;
  double min_robot_agent_distance() const;
  // Smallest pairwise centre distance minus 0.5*(r_i+r_j); >= 0 means the
  // interpenetration invariant holds.
  double min_agent_separation_slack() const;

  std::uint64_t state_digest() const;

 private:
  void spawn_initial_agents();
  void respawn_agent(AgentState& a);
  Vec2 jittered_clear_position(const Vec2& anchor, double jitter, double radius);
  bool segment_occluded(const Vec2& a, const Vec2& b) const;
  std::optional<MovementObservation> window_motion(const AgentState& a) const;
  void push_history(AgentState& a) const;

  Scenario scenario_;
  SimParams params_;
  std::vector<AgentState> agents_;
  RobotState robot_;
  double time_ = 0.0;
  int steps_taken_ = 0;
  Pose2 last_true_delta_;
  Pose2 last_odom_delta_;
  Rng rng_agents_;
  Rng rng_odom_;
};

}  // namespace crowdnav
