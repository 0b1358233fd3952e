#include "crowdnav/world.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace crowdnav {

namespace {

// Uniform grid over agent indices for pairwise-force neighbour queries.
class NeighborGrid {
 public:
  NeighborGrid(double cell, double width, double height)
      : cell_(cell),
        nx_(std::max(1, static_cast<int>(std::ceil(width / cell)))),
        ny_(std::max(1, static_cast<int>(std::ceil(height / cell)))),
        bins_(static_cast<std::size_t>(nx_) * ny_) {}

  void insert(int idx, const Vec2& p) { bins_[bin_of(p)].push_back(idx); }

  template <typename Fn>
  void for_each_near(const Vec2& p, Fn&& fn) const {
    const int cx = coord(p.x, nx_);
    const int cy = coord(p.y, ny_);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int bx = cx + dx, by = cy + dy;
        if (bx < 0 || by < 0 || bx >= nx_ || by >= ny_) continue;
        for (int idx : bins_[static_cast<std::size_t>(by) * nx_ + bx]) fn(idx);
      }
    }
  }

 private:
  int coord(double v, int n) const {
    return std::clamp(static_cast<int>(std::floor(v / cell_)), 0, n - 1);
  }
  std::size_t bin_of(const Vec2& p) const {
    return static_cast<std::size_t>(coord(p.y, ny_)) * nx_ + coord(p.x, nx_);
  }

  double cell_;
  int nx_, ny_;
  std::vector<std::vector<int>> bins_;
};

Vec2 lane_target(const Lane& lane, const AgentState& a) {
  return lane.waypoints[a.waypoint_index];
}

// Point at arc length s along the polyline, plus the segment it lies on.
std::pair<Vec2, std::size_t> point_at_arclength(const Lane& lane, double s) {
  double acc = 0.0;
  for (std::size_t i = 1; i < lane.waypoints.size(); ++i) {
    const Vec2 seg = lane.waypoints[i] - lane.waypoints[i - 1];
    const double len = seg.norm();
    if (s <= acc + len || i + 1 == lane.waypoints.size()) {
      const double t = len > 0.0 ? std::clamp((s - acc) / len, 0.0, 1.0) : 0.0;
      return {lane.waypoints[i - 1] + seg * t, i - 1};
    }
    acc += len;
  }
  return {lane.waypoints.front(), 0};
}

}  // namespace

World::World(Scenario scenario, SimParams params)
    : World(scenario, scenario.seed, params) {}

World::World(Scenario scenario, std::uint64_t seed, SimParams params)
    : scenario_(std::move(scenario)),
      params_(params),
      rng_agents_(Rng(seed).split(1)),
      rng_odom_(Rng(seed).split(2)) {
  robot_.true_pose = scenario_.robot_start;
  robot_.odom_pose = scenario_.robot_start;
  robot_.radius = params_.robot_radius;
  robot_.perception_range = params_.perception_range;
  spawn_initial_agents();
}

void World::spawn_initial_agents() {
  const int total = scenario_.target_agent_count();
  if (total <= 0 || scenario_.lanes.empty()) return;

  // Apportion the crowd across lanes by rate weight (uniform if all zero).
  std::vector<double> weights;
  double wsum = 0.0;
  for (const Lane& l : scenario_.lanes) {
    weights.push_back(l.rate);
    wsum += l.rate;
  }
  if (wsum <= 0.0) {
    std::fill(weights.begin(), weights.end(), 1.0);
    wsum = static_cast<double>(weights.size());
  }

  std::vector<int> counts(weights.size(), 0);
  int assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    counts[i] = static_cast<int>(std::floor(total * weights[i] / wsum));
    assigned += counts[i];
  }
  for (std::size_t i = 0; assigned < total; i = (i + 1) % counts.size()) {
    ++counts[i];
    ++assigned;
  }

  std::uint32_t next_id = 0;
  for (std::size_t li = 0; li < scenario_.lanes.size(); ++li) {
    const Lane& lane = scenario_.lanes[li];
    const double len = lane.length();
    for (int k = 0; k < counts[li]; ++k) {
      AgentState a;
      a.id = next_id++;
      a.lane_index = static_cast<std::uint32_t>(li);
      a.radius = params_.agent_radius;
      a.preferred_speed = rng_agents_.uniform(params_.pref_speed_min, params_.pref_speed_max);
      a.reverse = lane.bidirectional && (rng_agents_.next_u64() & 1u);

      const double s = rng_agents_.uniform(0.0, len);
      auto [p, seg] = point_at_arclength(lane, s);
      a.waypoint_index = a.reverse ? static_cast<std::uint32_t>(seg)
                                   : static_cast<std::uint32_t>(seg + 1);
      a.position = jittered_clear_position(p, params_.respawn_jitter, a.radius);
      const Vec2 dir = (lane_target(lane, a) - a.position).normalized();
      a.velocity = dir * a.preferred_speed;
      push_history(a);
      agents_.push_back(std::move(a));
    }
  }
}

Vec2 World::jittered_clear_position(const Vec2& anchor, double jitter, double radius) {
  Vec2 best = anchor;
  for (int attempt = 0; attempt < 20; ++attempt) {
    const double ang = rng_agents_.uniform(0.0, 2.0 * M_PI);
    const double rad = jitter * std::sqrt(rng_agents_.uniform());
    Vec2 cand = anchor + Vec2{std::cos(ang), std::sin(ang)} * rad;
    cand.x = std::clamp(cand.x, 0.0, scenario_.width);
    cand.y = std::clamp(cand.y, 0.0, scenario_.height);
    bool clear = true;
    for (const AgentState& other : agents_) {
      if ((other.position - cand).norm() < 0.5 * (radius + other.radius) + 0.05) {
        clear = false;
        break;
      }
    }
    best = cand;
    if (clear) return cand;
  }
  return best;
}

void World::respawn_agent(AgentState& a) {
  const Lane& lane = scenario_.lanes[a.lane_index];
  const Vec2 anchor = a.reverse ? lane.waypoints.back() : lane.waypoints.front();
  a.position = jittered_clear_position(anchor, params_.respawn_jitter, a.radius);
  a.waypoint_index = a.reverse ? static_cast<std::uint32_t>(lane.waypoints.size() - 2) : 1u;
  a.preferred_speed = rng_agents_.uniform(params_.pref_speed_min, params_.pref_speed_max);
  const Vec2 dir = (lane_target(lane, a) - a.position).normalized();
  a.velocity = dir * a.preferred_speed;
  a.history.clear();
  push_history(a);
}

void World::push_history(AgentState& a) const {
  a.history.push_back(a.position);
  const std::size_t cap = static_cast<std::size_t>(params_.history_len());
  if (a.history.size() > cap) {
    a.history.erase(a.history.begin());
  }
}

void World::step(double dt) {
  if (!(dt > 0.0 && dt <= 0.2)) {
    throw std::invalid_argument("World::step: dt must be in (0, 0.2]");
  }

  const double cutoff = 2.0 * params_.agent_radius + 4.0 * params_.repulsion_b;
  NeighborGrid grid(std::max(cutoff, 1.0), scenario_.width, scenario_.height);
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    grid.insert(static_cast<int>(i), agents_[i].position);
  }

  // Forces from the start-of-step snapshot.
  std::vector<Vec2> accel(agents_.size());
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    const AgentState& a = agents_[i];
    const Lane& lane = scenario_.lanes[a.lane_index];
    const Vec2 goal_dir = (lane_target(lane, a) - a.position).normalized();
    Vec2 f = (goal_dir * a.preferred_speed - a.velocity) * params_.goal_gain;

    grid.for_each_near(a.position, [&](int j) {
      if (j == static_cast<int>(i)) return;
      const AgentState& b = agents_[static_cast<std::size_t>(j)];
      const Vec2 d = a.position - b.position;
      const double dist = d.norm();
      if (dist > cutoff || dist == 0.0) return;
      const double mag =
          params_.repulsion_a * std::exp((a.radius + b.radius - dist) / params_.repulsion_b);
      f += d * (mag / dist);
    });

    // pedestrians give the robot a wider berth than each other
    {
      const Vec2 d = a.position - robot_.true_pose.position();
      const double dist = d.norm();
      const double reach = a.radius + robot_.radius + 4.0 * params_.robot_repulsion_b;
      if (dist <= reach && dist > 0.0) {
        const double mag = params_.robot_repulsion_a *
                           std::exp((a.radius + robot_.radius - dist) / params_.robot_repulsion_b);
        f += d * (mag / dist);
      }
    }

    for (const Obstacle& o : scenario_.obstacles) {
      const Vec2 cp = o.closest_point(a.position);
      Vec2 dir = a.position - cp;
      double dist = dir.norm();
      if (o.contains(a.position)) {
        // inside: cp is the nearest boundary point, so push toward it
        dir = cp - a.position;
        dist = 0.0;
        if (dir.norm() == 0.0) dir = {1.0, 0.0};
      }
      if (dist > params_.agent_radius + 4.0 * params_.repulsion_b) continue;
      const double n = dir.norm();
      if (n == 0.0) continue;
      const double mag =
          params_.repulsion_a * std::exp((a.radius - dist) / params_.repulsion_b);
      f += dir * (mag / n);
    }
    accel[i] = f;
  }

  for (std::size_t i = 0; i < agents_.size(); ++i) {
    AgentState& a = agents_[i];
    a.velocity += accel[i] * dt;
    const double vmax = 2.0 * a.preferred_speed;
    const double speed = a.velocity.norm();
    if (speed > vmax) a.velocity = a.velocity * (vmax / speed);
    a.position += a.velocity * dt;
    a.position.x = std::clamp(a.position.x, 0.0, scenario_.width);
    a.position.y = std::clamp(a.position.y, 0.0, scenario_.height);
  }

  // Waypoint progression and lane respawns.
  for (AgentState& a : agents_) {
    const Lane& lane = scenario_.lanes[a.lane_index];
    bool finished = false;
    while (!finished &&
           (a.position - lane.waypoints[a.waypoint_index]).norm() < params_.waypoint_tolerance) {
      if (a.reverse) {
        if (a.waypoint_index == 0) { finished = true; break; }
        --a.waypoint_index;
      } else {
        if (a.waypoint_index + 1 >= lane.waypoints.size()) { finished = true; break; }
        ++a.waypoint_index;
      }
    }
    if (finished) respawn_agent(a);
  }

  // Hard separation: keep pairwise centre distance >= 0.5*(r_i + r_j).
  for (int pass = 0; pass < 2; ++pass) {
    NeighborGrid sep_grid(std::max(cutoff, 1.0), scenario_.width, scenario_.height);
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      sep_grid.insert(static_cast<int>(i), agents_[i].position);
    }
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      AgentState& a = agents_[i];
      sep_grid.for_each_near(a.position, [&](int j) {
        if (j <= static_cast<int>(i)) return;
        AgentState& b = agents_[static_cast<std::size_t>(j)];
        const double min_sep = 0.5 * (a.radius + b.radius) + 0.02;
        Vec2 d = a.position - b.position;
        double dist = d.norm();
        if (dist >= min_sep) return;
        if (dist == 0.0) {
          const double ang = 2.0 * M_PI * static_cast<double>(a.id * 2654435761u % 1024u) / 1024.0;
          d = {std::cos(ang), std::sin(ang)};
          dist = 1.0;
        }
        const Vec2 push = d * (0.5 * (min_sep - dist) / dist);
        a.position += push;
        b.position -= push;
        a.position.x = std::clamp(a.position.x, 0.0, scenario_.width);
        a.position.y = std::clamp(a.position.y, 0.0, scenario_.height);
        b.position.x = std::clamp(b.position.x, 0.0, scenario_.width);
        b.position.y = std::clamp(b.position.y, 0.0, scenario_.height);
      });
    }
  }

  for (AgentState& a : agents_) push_history(a);

  // Robot kinematics plus odometry with motion-scaled noise.
  {
    const Vec2 cmd = robot_.commanded_velocity;
    Vec2 target = robot_.true_pose.position() + cmd * dt;
    target.x = std::clamp(target.x, 0.0, scenario_.width);
    target.y = std::clamp(target.y, 0.0, scenario_.height);
    const Vec2 dp = target - robot_.true_pose.position();
    const double new_heading = cmd.norm() > 1e-9 ? cmd.angle() : robot_.true_pose.theta;
    const double dtheta = normalize_angle(new_heading - robot_.true_pose.theta);
    const Vec2 body = dp.rotated(-robot_.true_pose.theta);

    last_true_delta_ = {body.x, body.y, dtheta};
    robot_.true_pose = robot_.true_pose.compose(last_true_delta_);

    const double trans = body.norm();
    const double sigma_t = params_.odom_noise.trans_per_trans * trans;
    const double sigma_r = params_.odom_noise.rot_per_rot * std::abs(dtheta) +
                           params_.odom_noise.rot_per_trans * trans;
    last_odom_delta_ = {body.x + rng_odom_.normal(0.0, sigma_t),
                        body.y + rng_odom_.normal(0.0, sigma_t),
                        dtheta + rng_odom_.normal(0.0, sigma_r)};
    robot_.odom_pose = robot_.odom_pose.compose(last_odom_delta_);
  }

  ++steps_taken_;
  time_ += dt;
}

bool World::history_ready() const {
  return steps_taken_ >= params_.history_len() - 1;
}

bool World::segment_occluded(const Vec2& a, const Vec2& b) const {
  for (const Obstacle& o : scenario_.obstacles) {
    if (o.blocks_segment(a, b)) return true;
  }
  return false;
}

std::optional<MovementObservation> World::window_motion(const AgentState& a) const {
  const std::size_t cap = static_cast<std::size_t>(params_.history_len());
  if (a.history.size() < cap) return std::nullopt;  // respawned or young agent
  return observation_from_window(a.history.front(), a.history.back(),
                                 params_.obs_window, params_.max_obs_speed, a.id,
                                 time_);
}

std::vector<MovementObservation> World::sense_pedestrians() const {
  if (!history_ready()) {
    throw std::logic_error("sense_pedestrians: not enough history buffered");
  }
  std::vector<MovementObservation> out;
  const Vec2 rp = robot_.true_pose.position();
  for (const AgentState& a : agents_) {
    if ((a.position - rp).norm() > robot_.perception_range) continue;
    if (segment_occluded(rp, a.position)) continue;
    auto obs = window_motion(a);
    if (!obs) continue;
    obs->start = robot_.true_pose.inverse_transform_point(obs->start);
    obs->direction = normalize_angle(obs->direction - robot_.true_pose.theta);
    obs->frame = ObsFrame::kRobot;
    out.push_back(*obs);
  }
  return out;
}

std::vector<MovementObservation> World::birdview_observations() const {
  if (!history_ready()) {
    throw std::logic_error("birdview_observations: not enough history buffered");
  }
  std::vector<MovementObservation> out;
  for (const AgentState& a : agents_) {
    if (auto obs = window_motion(a)) out.push_back(*obs);
  }
  return out;
}

std::vector<PedestrianTrack> World::nearby_pedestrians(double range) const {
  std::vector<PedestrianTrack> out;
  const Vec2 rp = robot_.true_pose.position();
  for (const AgentState& a : agents_) {
    const Vec2 rel = a.position - rp;
    if (rel.norm() > range) continue;
    if (segment_occluded(rp, a.position)) continue;
    out.push_back({rel, a.velocity});
  }
  return out;
}

bool World::robot_in_obstacle() const {
  const Vec2 p = robot_.true_pose.position();
  for (const Obstacle& o : scenario_.obstacles) {
    if (o.distance(p) < robot_.radius) return true;
  }
  return false;
}

double World::min_robot_agent_distance() const {
  double best = std::numeric_limits<double>::infinity();
  const Vec2 rp = robot_.true_pose.position();
  for (const AgentState& a : agents_) {
    best = std::min(best, (a.position - rp).norm());
  }
  return best;
}

double World::min_agent_separation_slack() const {
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    for (std::size_t j = i + 1; j < agents_.size(); ++j) {
      const double d = (agents_[i].position - agents_[j].position).norm();
      worst = std::min(worst, d - 0.5 * (agents_[i].radius + agents_[j].radius));
    }
  }
  return worst;
}

std::uint64_t World::state_digest() const {
  Fnv1a h;
  h.add(time_);
  h.add(static_cast<std::uint64_t>(agents_.size()));
  for (const AgentState& a : agents_) {
    h.add(static_cast<std::uint64_t>(a.id));
    h.add(a.position.x);
    h.add(a.position.y);
    h.add(a.velocity.x);
    h.add(a.velocity.y);
    h.add(a.preferred_speed);
    h.add(static_cast<std::uint64_t>(a.lane_index));
    h.add(static_cast<std::uint64_t>(a.waypoint_index));
    h.add(static_cast<std::uint64_t>(a.reverse ? 1 : 0));
  }
  for (const Pose2& p : {robot_.true_pose, robot_.odom_pose}) {
    h.add(p.x);
    h.add(p.y);
    h.add(p.theta);
  }
  h.add(robot_.commanded_velocity.x);
  h.add(robot_.commanded_velocity.y);
  return h.value();
}

}  // namespace crowdnav
