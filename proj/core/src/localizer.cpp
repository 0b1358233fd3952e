#include "crowdnav/localizer.hpp"

#include <algorithm>
#include <cmath>

namespace crowdnav {

double flow_match_score(double observed_direction, const FlowCell& cell, double gamma) {
  double theta_m = M_PI;
  for (const FlowComponent& c : cell.components) {
    theta_m = std::min(theta_m, angdiff(observed_direction, bin_center(c.direction_bin)));
  }
  const double q_hat = (M_PI - theta_m) / M_PI;
  const double n = static_cast<double>(cell.components.size());
  return q_hat / (1.0 + std::max(0.0, n - 1.0) * gamma);
}

void predict(std::vector<Particle>& particles, const Pose2& odom_delta,
             const FilterParams& params, Rng& rng) {
  const double trans = std::hypot(odom_delta.x, odom_delta.y);
  const double sigma_t =
      params.noise_inflation * params.odom_noise.trans_per_trans * trans;
  const double sigma_r =
      params.noise_inflation * (params.odom_noise.rot_per_rot * std::abs(odom_delta.theta) +
                                params.odom_noise.rot_per_trans * trans);
  for (Particle& p : particles) {
    const Pose2 noisy{odom_delta.x + rng.normal(0.0, sigma_t),
                      odom_delta.y + rng.normal(0.0, sigma_t),
                      odom_delta.theta + rng.normal(0.0, sigma_r)};
    p.pose = p.pose.compose(noisy);
  }
}

void normalize_weights(std::vector<Particle>& particles) {
  double sum = 0.0;
  for (const Particle& p : particles) sum += p.weight;
  if (sum <= 0.0) {
    const double w = 1.0 / static_cast<double>(particles.size());
    for (Particle& p : particles) p.weight = w;
    return;
  }
  for (Particle& p : particles) p.weight /= sum;
}

void weigh(std::vector<Particle>& particles,
           std::span<const MovementObservation> observations,
           const CrowdFlowMap& map, const MatchParams& params) {
  if (observations.empty()) return;
  for (Particle& p : particles) {
    double log_sum = 0.0;
    bool dead = false;
    for (const MovementObservation& obs : observations) {
      const Vec2 start_world = p.pose.transform_point(obs.start);
      const double dir_world = normalize_angle(obs.direction + p.pose.theta);
      const FlowCell* cell = map.cell_at(start_world);
      const double score =
          cell ? flow_match_score(dir_world, *cell, params.gamma) : params.weight_floor;
      if (score <= 0.0) {
        dead = true;
        break;
      }
      log_sum += std::log(score);
    }
    const double geo_mean =
        dead ? 0.0 : std::exp(log_sum / static_cast<double>(observations.size()));
    p.weight *= std::max(params.weight_floor, geo_mean);
  }
  normalize_weights(particles);
}

double effective_sample_size(const std::vector<Particle>& particles) {
  double sum_sq = 0.0;
  for (const Particle& p : particles) sum_sq += p.weight * p.weight;
  return sum_sq > 0.0 ? 1.0 / sum_sq : 0.0;
}

std::vector<Particle> systematic_resample(const std::vector<Particle>& particles,
                                          double u0) {
  const std::size_t n = particles.size();
  std::vector<Particle> out;
  out.reserve(n);
  double cumulative = 0.0;
  std::size_t i = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double u = u0 + static_cast<double>(j) / static_cast<double>(n);
    while (i + 1 < n && cumulative + particles[i].weight < u) {
      cumulative += particles[i].weight;
      ++i;
    }
    Particle p = particles[i];
    p.weight = 1.0 / static_cast<double>(n);
    out.push_back(p);
  }
  return out;
}

bool resample(std::vector<Particle>& particles, double ess_threshold, Rng& rng) {
  const double n = static_cast<double>(particles.size());
  if (effective_sample_size(particles) >= ess_threshold * n) return false;
  const double u0 = rng.uniform() / n;
  particles = systematic_resample(particles, u0);
  return true;
}

Pose2 estimate_pose(const std::vector<Particle>& particles) {
  double x = 0.0, y = 0.0, sin_sum = 0.0, cos_sum = 0.0;
  for (const Particle& p : particles) {
    x += p.weight * p.pose.x;
    y += p.weight * p.pose.y;
    sin_sum += p.weight * std::sin(p.pose.theta);
    cos_sum += p.weight * std::cos(p.pose.theta);
  }
  return {x, y, normalize_angle(std::atan2(sin_sum, cos_sum))};
}

CrowdLocalizer::CrowdLocalizer(const CrowdFlowMap& map, FilterParams params, Rng rng)
    : map_(map), params_(params), rng_(rng) {}

void CrowdLocalizer::init(const Pose2& initial_pose) {
  particles_.clear();
  particles_.reserve(static_cast<std::size_t>(params_.particle_count));
  const double w = 1.0 / static_cast<double>(params_.particle_count);
  for (int i = 0; i < params_.particle_count; ++i) {
    Particle p;
    p.pose.x = initial_pose.x + rng_.normal(0.0, params_.init_std_xy);
    p.pose.y = initial_pose.y + rng_.normal(0.0, params_.init_std_xy);
    p.pose.theta = normalize_angle(initial_pose.theta +
                                   rng_.normal(0.0, params_.init_std_theta));
    p.weight = w;
    particles_.push_back(p);
  }
}

void CrowdLocalizer::on_odometry(const Pose2& odom_delta) {
  predict(particles_, odom_delta, params_, rng_);
}

void CrowdLocalizer::on_observations(std::span<const MovementObservation> observations) {
  if (observations.empty()) return;
  weigh(particles_, observations, map_, params_.match);
  resample(particles_, params_.ess_threshold, rng_);
}

}  // namespace crowdnav
