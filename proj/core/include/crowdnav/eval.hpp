#pragma once

#include <span>
#include <string>
#include <vector>

#include "crowdnav/flow_map.hpp"
#include "crowdnav/localizer.hpp"
#include "crowdnav/logs.hpp"
#include "crowdnav/planner.hpp"
#include "crowdnav/scenario.hpp"
#include "crowdnav/world.hpp"

namespace crowdnav {

enum class LocalizerChoice { kOdometry, kCrowd, kGroundTruth };
enum class PlannerChoice { kAstarShortest, kAstarSocial, kDstarCrowd };

std::string to_string(LocalizerChoice c);
std::string to_string(PlannerChoice c);
LocalizerChoice localizer_from_string(const std::string& s);
PlannerChoice planner_from_string(const std::string& s);

struct EvalParams {
  SimParams sim;
  MapperParams mapper;
  FilterParams filter;
  CostWeights weights;
  FollowParams follow;
  double sense_period = 1.0;       // s, observation/filter/fusion cadence
  double replan_period = 1.0;      // s
  double arrival_radius = 1.0;     // m, physical goal acceptance
  double budget_factor = 2.0;      // x direct-path travel time
  double quality_period = 10.0;    // s between map-quality samples
  double warmup = 2.0;             // s of crowd relaxation before a session
  double comfort_accel = 0.1;      // m/s^2 speed ramp while unthreatened
};

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  LocalizerChoice localizer = LocalizerChoice::kOdometry;
  PlannerChoice planner = PlannerChoice::kAstarShortest;
  bool success = false;
  std::string fail_reason;  // "" | "timeout" | "collision"
  double mse = 0.0;         // m^2
  int ca_actions = 0;
  std::vector<std::pair<double, double>> map_quality_series;
  double wall_time = 0.0;   // s; excluded from determinism comparisons
  std::vector<TrajectorySample> trajectory;

  // everything except wall_time
  bool deterministic_equal(const RunReport& o) const;
};

struct TimedPose {
  double t = 0.0;
  Vec2 position;
  double theta = 0.0;
};

// Mean squared Euclidean position error, est linearly interpolated to the
// truth timestamps (heading excluded). Throws when fewer than 2 truth
// samples fall inside the estimate's time range.
double localization_mse(std::span<const TimedPose> est, std::span<const TimedPose> truth);

// Counts collision-avoidance actions: maximal runs of consecutive sliding
// windows (length t_traj) whose mean acceleration magnitude exceeds a_thres.
// Velocity/acceleration come from central differences at fixed dt.
int detect_ca_actions(std::span<const Vec2> positions, double dt,
                      double t_traj = 0.5, double a_thres = 0.15);

// Rate-limits commanded speed while no pedestrian forces an avoidance
// manoeuvre, so clean cruising stays below the CA-detection threshold while
// genuine avoidance jumps remain visible.
class CommandSmoother {
 public:
  Vec2 apply(const Vec2& raw, bool avoiding, double dt, double comfort_accel);

 private:
  double speed_ = 0.0;
  Vec2 dir_;
};

// Serpentine sweep over the extent (row spacing sized to the perception
// range), routed around obstacles; used as the mapping/localization tour.
std::vector<Vec2> default_tour(const Scenario& scenario, const SimParams& sim);

// Drives the robot with ground-truth pose while fusing sensed observations
// into a fresh map; samples map quality against the bird-view oracle every
// quality_period. Returns the map and the (t, quality) series.
std::pair<CrowdFlowMap, std::vector<std::pair<double, double>>> mapping_session(
    const Scenario& scenario, std::uint64_t seed, std::span<const Vec2> tour,
    double duration_s, const EvalParams& params);

struct LocalizationRun {
  std::vector<TrajectorySample> trajectory;
  std::vector<LocalizationSample> filter_log;
  double mse_est = 0.0;   // crowd-filter estimate vs truth
  double mse_odom = 0.0;  // dead-reckoned odometry vs truth
};

// Tour-driven run with the particle filter estimating passively; isolates
// localization accuracy from control effects.
LocalizationRun localization_session(const Scenario& scenario, std::uint64_t seed,
                                     const CrowdFlowMap& map, double duration_s,
                                     const EvalParams& params);

// Closed loop of sense -> localize -> (re)plan -> follow -> step.
// `map` may be null only for configurations that need no map
// (odometry + astar_shortest). budget_s <= 0 derives the budget from
// budget_factor and the direct-path travel time.
RunReport run_episode(const Scenario& scenario, std::uint64_t seed,
                      LocalizerChoice localizer, PlannerChoice planner,
                      double budget_s, const CrowdFlowMap* map,
                      const EvalParams& params);

// Episodes over seeds, parallelized up to `threads` (<=0 reads
// CROWDNAV_THREADS, then hardware concurrency). Reports sorted by seed.
std::vector<RunReport> run_batch(const Scenario& scenario,
                                 std::span<const std::uint64_t> seeds,
                                 LocalizerChoice localizer, PlannerChoice planner,
                                 double budget_s, const CrowdFlowMap* map,
                                 const EvalParams& params, int threads = 0);

struct BatchSummary {
  std::string scenario;
  LocalizerChoice localizer = LocalizerChoice::kOdometry;
  PlannerChoice planner = PlannerChoice::kAstarShortest;
  int runs = 0;
  double success_rate = 0.0;
  double ca_mean = 0.0;
  double ca_std = 0.0;
  double mse_mean = 0.0;
};

BatchSummary summarize(std::span<const RunReport> reports);

void write_runs_csv(const std::string& path, std::span<const RunReport> reports);
std::string summary_to_json(std::span<const BatchSummary> summaries);

int thread_budget(int requested);

}  // namespace crowdnav
