#include "crowdnav/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "crowdnav/errors.hpp"
#include "json.hpp"

namespace crowdnav {

std::string to_string(LocalizerChoice c) {
  switch (c) {
    case LocalizerChoice::kOdometry: return "odometry";
    case LocalizerChoice::kCrowd: return "crowd";
    default: return "ground_truth";
  }
}

std::string to_string(PlannerChoice c) {
  switch (c) {
    case PlannerChoice::kAstarShortest: return "astar_shortest";
    case PlannerChoice::kAstarSocial: return "astar_social";
    default: return "dstar_crowd";
  }
}

LocalizerChoice localizer_from_string(const std::string& s) {
  if (s == "odometry") return LocalizerChoice::kOdometry;
  if (s == "crowd") return LocalizerChoice::kCrowd;
  if (s == "ground-truth" || s == "ground_truth") return LocalizerChoice::kGroundTruth;
  throw ConfigError("unknown localizer '" + s + "' (odometry|crowd|ground-truth)");
}

PlannerChoice planner_from_string(const std::string& s) {
  if (s == "astar-shortest" || s == "astar_shortest") return PlannerChoice::kAstarShortest;
  if (s == "astar-social" || s == "astar_social") return PlannerChoice::kAstarSocial;
  if (s == "dstar" || s == "dstar_crowd") return PlannerChoice::kDstarCrowd;
  throw ConfigError("unknown planner '" + s + "' (astar-shortest|astar-social|dstar)");
}

bool RunReport::deterministic_equal(const RunReport& o) const {
  return scenario == o.scenario && seed == o.seed && localizer == o.localizer &&
         planner == o.planner && success == o.success && fail_reason == o.fail_reason &&
         mse == o.mse && ca_actions == o.ca_actions &&
         map_quality_series == o.map_quality_series && trajectory == o.trajectory;
}

double localization_mse(std::span<const TimedPose> est, std::span<const TimedPose> truth) {
  if (est.size() < 2) throw std::invalid_argument("localization_mse: estimate too short");
  double sum = 0.0;
  int count = 0;
  std::size_t k = 0;
  for (const TimedPose& ref : truth) {
    if (ref.t < est.front().t || ref.t > est.back().t) continue;
    while (k + 2 < est.size() && est[k + 1].t < ref.t) ++k;
    const TimedPose& a = est[k];
    const TimedPose& b = est[k + 1];
    const double span_t = b.t - a.t;
    const double u = span_t > 0.0 ? std::clamp((ref.t - a.t) / span_t, 0.0, 1.0) : 0.0;
    const Vec2 p = a.position + (b.position - a.position) * u;
    sum += (p - ref.position).norm_sq();
    ++count;
  }
  if (count < 2) {
    throw std::invalid_argument("localization_mse: fewer than 2 overlapping samples");
  }
  return sum / count;
}

int detect_ca_actions(std::span<const Vec2> positions, double dt, double t_traj,
                      double a_thres) {
  if (dt <= 0.0 || dt > t_traj / 2.0) {
    throw std::invalid_argument("detect_ca_actions: need dt <= t_traj / 2");
  }
  const std::size_t n = positions.size();
  if (n < 5 || static_cast<double>(n - 1) * dt < t_traj) return 0;

  // central differences: velocity on [1, n-2], acceleration on [2, n-3]
  std::vector<Vec2> vel(n);
  for (std::size_t k = 1; k + 1 < n; ++k) {
    vel[k] = (positions[k + 1] - positions[k - 1]) / (2.0 * dt);
  }
  std::vector<double> acc;
  for (std::size_t k = 2; k + 2 < n; ++k) {
    acc.push_back(((vel[k + 1] - vel[k - 1]) / (2.0 * dt)).norm());
  }

  const std::size_t window = static_cast<std::size_t>(std::lround(t_traj / dt));
  if (acc.size() < window) return 0;

  int events = 0;
  bool in_run = false;
  double mean = 0.0;
  for (std::size_t j = 0; j + window <= acc.size(); ++j) {
    if (j == 0) {
      for (std::size_t k = 0; k < window; ++k) mean += acc[k];
      mean /= static_cast<double>(window);
    } else {
      mean += (acc[j + window - 1] - acc[j - 1]) / static_cast<double>(window);
    }
    const bool hot = mean > a_thres;
    if (hot && !in_run) ++events;
    in_run = hot;
  }
  return events;
}

Vec2 CommandSmoother::apply(const Vec2& raw, bool avoiding, double dt,
                            double comfort_accel) {
  const double target = raw.norm();
  if (avoiding) {
    speed_ = target;
    if (target > 1e-9) dir_ = raw / target;
    return raw;
  }
  speed_ = std::clamp(target, speed_ - comfort_accel * dt, speed_ + comfort_accel * dt);
  if (speed_ < 0.0) speed_ = 0.0;
  if (target > 1e-9) dir_ = raw / target;
  return dir_ * speed_;
}

namespace {

GridCellId clamp_cell(const CrowdFlowMap& map, const Vec2& p) {
  const int i = std::clamp(
      static_cast<int>(std::floor((p.x - map.origin().x) / map.resolution())), 0,
      map.width() - 1);
  const int j = std::clamp(
      static_cast<int>(std::floor((p.y - map.origin().y) / map.resolution())), 0,
      map.height() - 1);
  return {i, j};
}

std::vector<std::uint8_t> occupancy_mask(const Scenario& s, const CrowdFlowMap& grid,
                                         double inflate) {
  std::vector<std::uint8_t> blocked(
      static_cast<std::size_t>(grid.width()) * grid.height(), 0);
  for (int j = 0; j < grid.height(); ++j) {
    for (int i = 0; i < grid.width(); ++i) {
      const Vec2 c = grid.cell_center(i, j);
      for (const Obstacle& o : s.obstacles) {
        if (o.distance(c) < inflate) {
          blocked[grid.flat(i, j)] = 1;
          break;
        }
      }
    }
  }
  return blocked;
}

GridCellId nearest_free_cell(const CrowdFlowMap& grid,
                             const std::vector<std::uint8_t>& blocked, GridCellId c) {
  if (!blocked[grid.flat(c.i, c.j)]) return c;
  for (int radius = 1; radius < std::max(grid.width(), grid.height()); ++radius) {
    for (int dj = -radius; dj <= radius; ++dj) {
      for (int di = -radius; di <= radius; ++di) {
        if (std::max(std::abs(di), std::abs(dj)) != radius) continue;
        const GridCellId n{c.i + di, c.j + dj};
        if (grid.in_bounds(n.i, n.j) && !blocked[grid.flat(n.i, n.j)]) return n;
      }
    }
  }
  return c;
}

// Routes the corner waypoints of a tour around obstacles over an empty grid;
// the returned polyline is a closed loop of cell centres.
std::vector<Vec2> route_tour(const Scenario& scenario,
                             std::span<const Vec2> corners) {
  const CrowdFlowMap grid = CrowdFlowMap::covering(scenario, 1.0);
  const std::vector<std::uint8_t> blocked = occupancy_mask(scenario, grid, 0.6);
  std::vector<Vec2> out;
  const std::size_t n = corners.size();
  for (std::size_t k = 0; k < n; ++k) {
    const GridCellId a = nearest_free_cell(grid, blocked, clamp_cell(grid, corners[k]));
    const GridCellId b =
        nearest_free_cell(grid, blocked, clamp_cell(grid, corners[(k + 1) % n]));
    const auto leg = plan_astar(grid, a, b, CostWeights{}, false, blocked);
    if (!leg) {
      // unreachable leg: keep the corner and let pursuit cut straight
      out.push_back(grid.cell_center(a.i, a.j));
      continue;
    }
    for (std::size_t p = 0; p + 1 < leg->world_points.size(); ++p) {
      out.push_back(leg->world_points[p]);
    }
  }
  return out;
}

// Advances around a closed polyline, issuing pure-pursuit commands through
// the shared reactive follower.
class TourDriver {
 public:
  explicit TourDriver(std::vector<Vec2> points) : points_(std::move(points)) {}

  Vec2 command(const Pose2& pose, std::span<const PedestrianTrack> pedestrians,
               const FollowParams& fp, bool* avoiding) {
    if (points_.empty()) return {0.0, 0.0};
    std::size_t guard = 0;
    while ((points_[idx_] - pose.position()).norm() < 1.0 && guard++ < points_.size()) {
      idx_ = (idx_ + 1) % points_.size();
    }
    const Vec2 target = points_[idx_];
    return follow(std::span<const Vec2>(&target, 1), pose, pedestrians, fp, avoiding);
  }

 private:
  std::vector<Vec2> points_;
  std::size_t idx_ = 0;
};

double quality_vs_birdview(const CrowdFlowMap& map, const World& world) {
  const auto refs = world.birdview_observations();
  if (refs.empty()) return 0.0;
  return map_quality(map, refs);
}

void warm_up(World& world, const EvalParams& params) {
  const double warm = std::max(params.warmup, world.params().obs_window);
  const int steps = static_cast<int>(std::ceil(warm / world.params().dt));
  for (int k = 0; k < steps; ++k) world.step({0.0, 0.0}, world.params().dt);
}

}  // namespace

std::vector<Vec2> default_tour(const Scenario& scenario, const SimParams& sim) {
  const double margin = std::min({3.0, scenario.width / 4.0, scenario.height / 4.0});
  const double spacing = std::max(2.0, 1.6 * sim.perception_range);
  std::vector<double> rows;
  for (double y = margin; y <= scenario.height - margin + 1e-9; y += spacing) {
    rows.push_back(y);
  }
  if (rows.empty()) rows.push_back(scenario.height / 2.0);
  if (rows.size() == 1 && scenario.height - margin > rows.front() + 1.0) {
    rows.push_back(scenario.height - margin);
  }
  std::vector<Vec2> tour;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double x0 = k % 2 == 0 ? margin : scenario.width - margin;
    const double x1 = k % 2 == 0 ? scenario.width - margin : margin;
    tour.push_back({x0, rows[k]});
    tour.push_back({x1, rows[k]});
  }
  return tour;
}

std::pair<CrowdFlowMap, std::vector<std::pair<double, double>>> mapping_session(
    const Scenario& scenario, std::uint64_t seed, std::span<const Vec2> tour,
    double duration_s, const EvalParams& params) {
  World world(scenario, seed, params.sim);
  CrowdFlowMap map = CrowdFlowMap::covering(scenario, params.mapper.resolution);
  warm_up(world, params);

  TourDriver driver(route_tour(scenario, tour));
  CommandSmoother smoother;
  std::vector<std::pair<double, double>> series;
  series.emplace_back(0.0, quality_vs_birdview(map, world));

  const double dt = params.sim.dt;
  const double t0 = world.time();
  double next_sense = params.sense_period;
  double next_quality = params.quality_period;
  while (world.time() - t0 + 1e-9 < duration_s) {
    bool avoiding = false;
    const Vec2 raw = driver.command(world.robot().true_pose,
                                    world.nearby_pedestrians(params.follow.avoid_range),
                                    params.follow, &avoiding);
    world.step(smoother.apply(raw, avoiding, dt, params.comfort_accel), dt);
    const double ts = world.time() - t0;
    if (ts + 1e-9 >= next_sense) {
      const auto local = world.sense_pedestrians();
      std::vector<MovementObservation> global;
      global.reserve(local.size());
      for (const auto& obs : local) global.push_back(to_global(obs, world.robot().true_pose));
      map.fuse(global, params.mapper);
      next_sense += params.sense_period;
    }
    if (ts + 1e-9 >= next_quality) {
      series.emplace_back(ts, quality_vs_birdview(map, world));
      next_quality += params.quality_period;
    }
  }
  map.refresh_all(params.mapper);
  if (duration_s > 0.0 && series.back().first < duration_s - 1e-9) {
    series.emplace_back(duration_s, quality_vs_birdview(map, world));
  }
  return {std::move(map), std::move(series)};
}

LocalizationRun localization_session(const Scenario& scenario, std::uint64_t seed,
                                     const CrowdFlowMap& map, double duration_s,
                                     const EvalParams& params) {
  World world(scenario, seed, params.sim);
  warm_up(world, params);

  FilterParams fp = params.filter;
  fp.odom_noise = params.sim.odom_noise;
  CrowdLocalizer filter(map, fp, Rng(seed).split(3));
  filter.init(world.robot().odom_pose);

  TourDriver driver(route_tour(scenario, default_tour(scenario, params.sim)));
  CommandSmoother smoother;
  LocalizationRun run;

  const double dt = params.sim.dt;
  const double t0 = world.time();
  double next_sense = params.sense_period;
  while (world.time() - t0 + 1e-9 < duration_s) {
    bool avoiding = false;
    const Vec2 raw = driver.command(world.robot().true_pose,
                                    world.nearby_pedestrians(params.follow.avoid_range),
                                    params.follow, &avoiding);
    const Vec2 cmd = smoother.apply(raw, avoiding, dt, params.comfort_accel);
    world.step(cmd, dt);
    filter.on_odometry(world.read_odometry());
    const double ts = world.time() - t0;
    if (ts + 1e-9 >= next_sense) {
      const auto obs = world.sense_pedestrians();
      filter.on_observations(obs);
      run.filter_log.push_back(
          {ts, filter.estimate(), filter.ess(), static_cast<int>(obs.size())});
      next_sense += params.sense_period;
    }
    run.trajectory.push_back({ts, world.robot().true_pose, world.robot().odom_pose,
                              filter.estimate(), cmd});
  }

  std::vector<TimedPose> truth, est, odom;
  for (const TrajectorySample& s : run.trajectory) {
    truth.push_back({s.t, s.true_pose.position(), s.true_pose.theta});
    est.push_back({s.t, s.est_pose.position(), s.est_pose.theta});
    odom.push_back({s.t, s.odom_pose.position(), s.odom_pose.theta});
  }
  run.mse_est = localization_mse(est, truth);
  run.mse_odom = localization_mse(odom, truth);
  return run;
}

RunReport run_episode(const Scenario& scenario, std::uint64_t seed,
                      LocalizerChoice localizer, PlannerChoice planner,
                      double budget_s, const CrowdFlowMap* map,
                      const EvalParams& params) {
  const auto wall_start = std::chrono::steady_clock::now();
  const bool needs_map =
      localizer == LocalizerChoice::kCrowd || planner != PlannerChoice::kAstarShortest;
  if (needs_map && map == nullptr) {
    throw ConfigError("configuration '" + to_string(localizer) + "+" + to_string(planner) +
                      "' requires a prebuilt crowd-flow map");
  }

  RunReport report;
  report.scenario = scenario.name;
  report.seed = seed;
  report.localizer = localizer;
  report.planner = planner;

  World world(scenario, seed, params.sim);
  CrowdFlowMap working =
      map ? *map : CrowdFlowMap::covering(scenario, params.mapper.resolution);
  warm_up(world, params);

  std::optional<CrowdLocalizer> filter;
  if (localizer == LocalizerChoice::kCrowd) {
    FilterParams fp = params.filter;
    fp.odom_noise = params.sim.odom_noise;
    filter.emplace(*map, fp, Rng(seed).split(3));
    filter->init(world.robot().odom_pose);
  }
  const auto believed = [&]() -> Pose2 {
    if (filter) return filter->estimate();
    if (localizer == LocalizerChoice::kGroundTruth) return world.robot().true_pose;
    return world.robot().odom_pose;
  };

  const GridCellId goal_cell = clamp_cell(working, scenario.robot_goal);
  const double direct =
      octile_distance(clamp_cell(working, scenario.robot_start.position()), goal_cell) *
      working.resolution();
  const double budget =
      budget_s > 0.0 ? budget_s : params.budget_factor * direct / params.follow.v_max;

  std::optional<DStarPlanner> dstar;
  GridPath path;
  std::unordered_set<int> path_cells;
  bool have_path = false;

  const auto replan = [&](GridCellId from, const std::vector<int>& changed) {
    std::optional<GridPath> next;
    if (planner == PlannerChoice::kDstarCrowd) {
      if (!dstar) {
        dstar.emplace(working, from, goal_cell, params.weights);
        next = dstar->plan();
      } else {
        next = dstar->replan(changed, from);
      }
    } else {
      next = plan_astar(working, from, goal_cell, params.weights,
                        planner == PlannerChoice::kAstarSocial);
    }
    if (next) {
      path = std::move(*next);
      path_cells.clear();
      for (const GridCellId& c : path.cells) {
        path_cells.insert(static_cast<int>(working.flat(c.i, c.j)));
      }
      have_path = true;
    }
    return next.has_value();
  };

  GridCellId plan_cell = clamp_cell(working, believed().position());
  replan(plan_cell, {});

  CommandSmoother smoother;
  std::vector<int> pending_changes;
  const double dt = params.sim.dt;
  const double t0 = world.time();
  double next_sense = params.sense_period;
  double next_replan = params.replan_period;
  double next_quality = params.quality_period;
  const double collision_dist = world.robot().radius + params.sim.agent_radius;

  while (world.time() - t0 + 1e-9 < budget) {
    const double ts = world.time() - t0;
    if (world.history_ready() && ts + 1e-9 >= next_sense) {
      const auto obs = world.sense_pedestrians();
      if (filter) filter->on_observations(obs);
      const Pose2 bel = believed();
      std::vector<MovementObservation> global;
      global.reserve(obs.size());
      for (const auto& o : obs) global.push_back(to_global(o, bel));
      const auto changed = working.fuse(global, params.mapper);
      pending_changes.insert(pending_changes.end(), changed.begin(), changed.end());
      next_sense += params.sense_period;
    }

    const Pose2 bel = believed();
    const GridCellId bel_cell = clamp_cell(working, bel.position());
    bool on_path_change = false;
    for (int id : pending_changes) {
      if (path_cells.count(id)) {
        on_path_change = true;
        break;
      }
    }
    if (!have_path || ts + 1e-9 >= next_replan || !(bel_cell == plan_cell) ||
        on_path_change) {
      if (!replan(bel_cell, pending_changes)) {
        report.fail_reason = "timeout";  // unreachable goal; treated as non-arrival
        break;
      }
      pending_changes.clear();
      plan_cell = bel_cell;
      next_replan = ts + params.replan_period;
    }

    bool avoiding = false;
    const Vec2 raw = follow(path.world_points, bel,
                            world.nearby_pedestrians(params.follow.avoid_range),
                            params.follow, &avoiding);
    const Vec2 cmd = smoother.apply(raw, avoiding, dt, params.comfort_accel);
    world.step(cmd, dt);
    if (filter) filter->on_odometry(world.read_odometry());

    report.trajectory.push_back({world.time() - t0, world.robot().true_pose,
                                 world.robot().odom_pose, believed(), cmd});

    if (map && world.time() - t0 + 1e-9 >= next_quality) {
      report.map_quality_series.emplace_back(world.time() - t0,
                                             quality_vs_birdview(working, world));
      next_quality += params.quality_period;
    }

    if (world.min_robot_agent_distance() < collision_dist || world.robot_in_obstacle()) {
      report.fail_reason = "collision";
      break;
    }
    if ((world.robot().true_pose.position() - scenario.robot_goal).norm() <
        params.arrival_radius) {
      report.success = true;
      break;
    }
  }
  if (!report.success && report.fail_reason.empty()) report.fail_reason = "timeout";

  if (report.trajectory.size() >= 2) {
    std::vector<TimedPose> truth, est;
    std::vector<Vec2> positions;
    for (const TrajectorySample& s : report.trajectory) {
      truth.push_back({s.t, s.true_pose.position(), s.true_pose.theta});
      est.push_back({s.t, s.est_pose.position(), s.est_pose.theta});
      positions.push_back(s.true_pose.position());
    }
    report.mse = localization_mse(est, truth);
    report.ca_actions = detect_ca_actions(positions, dt);
  }
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return report;
}

int thread_budget(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CROWDNAV_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

std::vector<RunReport> run_batch(const Scenario& scenario,
                                 std::span<const std::uint64_t> seeds,
                                 LocalizerChoice localizer, PlannerChoice planner,
                                 double budget_s, const CrowdFlowMap* map,
                                 const EvalParams& params, int threads) {
  std::vector<RunReport> reports(seeds.size());
  const int workers = std::min<int>(thread_budget(threads),
                                    static_cast<int>(seeds.size()) > 0
                                        ? static_cast<int>(seeds.size())
                                        : 1);
  std::atomic<std::size_t> cursor{0};
  std::vector<std::thread> pool;
  std::atomic<bool> failed{false};
  std::string error_message;
  std::mutex error_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = cursor.fetch_add(1);
        if (i >= seeds.size() || failed.load()) break;
        try {
          reports[i] =
              run_episode(scenario, seeds[i], localizer, planner, budget_s, map, params);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(error_mutex);
          error_message = e.what();
          failed.store(true);
          break;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (failed.load()) throw ConfigError(error_message);
  std::sort(reports.begin(), reports.end(),
            [](const RunReport& a, const RunReport& b) { return a.seed < b.seed; });
  return reports;
}

BatchSummary summarize(std::span<const RunReport> reports) {
  BatchSummary s;
  if (reports.empty()) return s;
  s.scenario = reports.front().scenario;
  s.localizer = reports.front().localizer;
  s.planner = reports.front().planner;
  s.runs = static_cast<int>(reports.size());
  double ca_sum = 0.0, mse_sum = 0.0;
  int successes = 0;
  for (const RunReport& r : reports) {
    ca_sum += r.ca_actions;
    mse_sum += r.mse;
    if (r.success) ++successes;
  }
  s.success_rate = static_cast<double>(successes) / s.runs;
  s.ca_mean = ca_sum / s.runs;
  s.mse_mean = mse_sum / s.runs;
  double var = 0.0;
  for (const RunReport& r : reports) {
    var += (r.ca_actions - s.ca_mean) * (r.ca_actions - s.ca_mean);
  }
  s.ca_std = s.runs > 1 ? std::sqrt(var / (s.runs - 1)) : 0.0;
  return s;
}

void write_runs_csv(const std::string& path, std::span<const RunReport> reports) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open file for writing: " + path);
  out << "scenario,seed,localizer,planner,success,fail_reason,mse,ca_actions,final_quality\n";
  for (const RunReport& r : reports) {
    char mse_buf[32];
    std::snprintf(mse_buf, sizeof(mse_buf), "%.9g", r.mse);
    out << r.scenario << ',' << r.seed << ',' << to_string(r.localizer) << ','
        << to_string(r.planner) << ',' << (r.success ? 1 : 0) << ',' << r.fail_reason
        << ',' << mse_buf << ',' << r.ca_actions << ',';
    if (!r.map_quality_series.empty()) {
      char q_buf[32];
      std::snprintf(q_buf, sizeof(q_buf), "%.9g", r.map_quality_series.back().second);
      out << q_buf;
    }
    out << '\n';
  }
}

std::string summary_to_json(std::span<const BatchSummary> summaries) {
  nlohmann::json root = nlohmann::json::array();
  for (const BatchSummary& s : summaries) {
    root.push_back({{"scenario", s.scenario},
                    {"config",
                     {{"localizer", to_string(s.localizer)},
                      {"planner", to_string(s.planner)}}},
                    {"runs", s.runs},
                    {"success_rate", s.success_rate},
                    {"ca_mean", s.ca_mean},
                    {"ca_std", s.ca_std},
                    {"mse_mean", s.mse_mean}});
  }
  return root.dump(2);
}

}  // namespace crowdnav
