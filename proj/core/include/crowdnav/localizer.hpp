#pragma once

#include <span>
#include <vector>

#include "crowdnav/flow_map.hpp"
#include "crowdnav/geometry.hpp"
#include "crowdnav/observation.hpp"
#include "crowdnav/rng.hpp"
#include "crowdnav/world.hpp"

namespace crowdnav {

struct Particle {
  Pose2 pose;
  double weight = 0.0;
};

struct MatchParams {
  double gamma = 0.5;         // diversity discount, in [0, 1]
  double weight_floor = 1e-3; // lower bound on a particle's raw weight
};

struct FilterParams {
  int particle_count = 500;
  MatchParams match;
  double ess_threshold = 0.5;       // resample when ESS < threshold * n_p
  double init_std_xy = 1.0;         // m
  double init_std_theta = 0.2;      // rad
  double noise_inflation = 1.5;     // scales the odometry noise model
  OdomNoise odom_noise;
};

// Angular match of one observed direction against a cell's flow components:
// q_hat = (pi - theta_m) / pi against the closest bin centre (theta_m = pi
// for an empty cell), discounted by direction diversity:
// q = q_hat / (1 + (n - 1) * gamma).
double flow_match_score(double observed_direction, const FlowCell& cell, double gamma);

// Advances every particle by the body-frame odometry delta plus Gaussian
// noise whose stds scale with the delta (coefficients = odometry model times
// noise_inflation). Weights are untouched.
void predict(std::vector<Particle>& particles, const Pose2& odom_delta,
             const FilterParams& params, Rng& rng);

// Reweights particles against the map using robot-frame observations: each
// observation is transformed into the world frame through the particle pose,
// scored against the cell at its start point, and the per-observation scores
// combine by geometric mean (floored). No observations -> weights untouched.
void weigh(std::vector<Particle>& particles,
           std::span<const MovementObservation> observations,
           const CrowdFlowMap& map, const MatchParams& params);

// Systematic resampling with the pivot u0 in [0, 1/n) supplied explicitly.
std::vector<Particle> systematic_resample(const std::vector<Particle>& particles,
                                          double u0);

// Resamples to equal weights iff ESS = 1 / sum(w^2) < ess_threshold * n.
// Returns true if a resample happened.
bool resample(std::vector<Particle>& particles, double ess_threshold, Rng& rng);

double effective_sample_size(const std::vector<Particle>& particles);

// Weighted mean position with a circular weighted mean heading.
Pose2 estimate_pose(const std::vector<Particle>& particles);

void normalize_weights(std::vector<Particle>& particles);

// Particle filter over robot pose with the flow-matching observation model.
class CrowdLocalizer {
 public:
  CrowdLocalizer(const CrowdFlowMap& map, FilterParams params, Rng rng);

  // Gaussian cloud around the initial odometry pose.
  void init(const Pose2& initial_pose);

  void on_odometry(const Pose2& odom_delta);
  // Robot-frame observations; runs weigh + conditional resample.
  void on_observations(std::span<const MovementObservation> observations);

  Pose2 estimate() const { return estimate_pose(particles_); }
  double ess() const { return effective_sample_size(particles_); }
  const std::vector<Particle>& particles() const { return particles_; }

 private:
  const CrowdFlowMap& map_;
  FilterParams params_;
  Rng rng_;
  std::vector<Particle> particles_;
};

}  // namespace crowdnav
