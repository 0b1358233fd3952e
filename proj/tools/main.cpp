#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crowdnav/errors.hpp"
#include "crowdnav/eval.hpp"
#include "crowdnav/flow_map.hpp"
#include "crowdnav/logs.hpp"
#include "crowdnav/scenario.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace crowdnav;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dots = part.find("..");
    if (dots != std::string::npos) {
      const std::uint64_t lo = std::stoull(part.substr(0, dots));
      const std::uint64_t hi = std::stoull(part.substr(dots + 2));
      if (hi < lo) throw ConfigError("seed range '" + part + "' is descending");
      for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    } else if (!part.empty()) {
      seeds.push_back(std::stoull(part));
    }
  }
  if (seeds.empty()) throw ConfigError("no seeds given");
  return seeds;
}

// Pooled bird-view observations from a freshly seeded crowd; serves as the
// reference set for quality heatmaps.
std::vector<MovementObservation> reference_observations(const Scenario& scenario,
                                                        std::uint64_t seed,
                                                        double duration,
                                                        const EvalParams& params) {
  World world(scenario, seed, params.sim);
  const double dt = params.sim.dt;
  const int warm = static_cast<int>(std::ceil(
      std::max(params.warmup, params.sim.obs_window) / dt));
  for (int k = 0; k < warm; ++k) world.step({0, 0}, dt);
  std::vector<MovementObservation> refs;
  const int steps = static_cast<int>(std::lround(duration / dt));
  for (int k = 0; k < steps; ++k) {
    world.step({0, 0}, dt);
    if (k % static_cast<int>(std::lround(params.sense_period / dt)) == 0) {
      const auto batch = world.birdview_observations();
      refs.insert(refs.end(), batch.begin(), batch.end());
    }
  }
  return refs;
}

struct Image {
  int w = 0, h = 0;
  std::vector<unsigned char> rgb;

  Image(int width, int height) : w(width), h(height), rgb(3u * width * height, 255) {}

  void set(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    const std::size_t at = 3u * (static_cast<std::size_t>(y) * w + x);
    rgb[at] = r;
    rgb[at + 1] = g;
    rgb[at + 2] = b;
  }

  void disc(int cx, int cy, int radius, unsigned char r, unsigned char g, unsigned char b) {
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx) {
        if (dx * dx + dy * dy <= radius * radius) set(cx + dx, cy + dy, r, g, b);
      }
    }
  }

  void write_ppm(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open frame for writing: " + path);
    out << "P6\n" << w << ' ' << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()),
              static_cast<std::streamsize>(rgb.size()));
  }
};

struct FrameRenderer {
  double scale;
  int w, h;
  const Scenario& scenario;

  FrameRenderer(const Scenario& s, double px_per_m)
      : scale(px_per_m),
        w(static_cast<int>(std::lround(s.width * px_per_m))),
        h(static_cast<int>(std::lround(s.height * px_per_m))),
        scenario(s) {}

  int px(double x) const { return static_cast<int>(std::floor(x * scale)); }
  int py(double y) const { return h - 1 - static_cast<int>(std::floor(y * scale)); }

  Image background() const {
    Image img(w, h);
    for (const Obstacle& o : scenario.obstacles) {
      if (o.shape == Obstacle::Shape::kRect) {
        for (int y = py(o.y + o.h); y <= py(o.y); ++y) {
          for (int x = px(o.x); x <= px(o.x + o.w); ++x) img.set(x, y, 90, 90, 90);
        }
      } else {
        const int r = static_cast<int>(std::lround(o.r * scale));
        const int cx = px(o.x), cy = py(o.y);
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            if (dx * dx + dy * dy <= r * r) img.set(cx + dx, cy + dy, 90, 90, 90);
          }
        }
      }
    }
    for (const Lane& lane : scenario.lanes) {
      for (std::size_t k = 1; k < lane.waypoints.size(); ++k) {
        const Vec2 a = lane.waypoints[k - 1], b = lane.waypoints[k];
        const double len = (b - a).norm();
        const int steps = std::max(2, static_cast<int>(len * scale));
        for (int s = 0; s <= steps; ++s) {
          const Vec2 p = a + (b - a) * (static_cast<double>(s) / steps);
          img.set(px(p.x), py(p.y), 195, 215, 235);
        }
      }
    }
    const int gx = px(scenario.robot_goal.x), gy = py(scenario.robot_goal.y);
    for (int d = -4; d <= 4; ++d) {
      img.set(gx + d, gy, 140, 60, 170);
      img.set(gx, gy + d, 140, 60, 170);
    }
    return img;
  }
};

int cmd_map(const std::string& scenario_path, std::uint64_t seed, bool seed_set,
            double duration, const std::string& out_dir) {
  Scenario scenario = load_scenario_file(scenario_path);
  if (seed_set) scenario.seed = seed;
  EvalParams params;
  fs::create_directories(out_dir);

  const auto tour = default_tour(scenario, params.sim);
  auto [map, series] = mapping_session(scenario, scenario.seed, tour, duration, params);

  save_map_file(map, out_dir + "/map.json");
  write_quality_csv(out_dir + "/quality.csv", series);
  const auto refs =
      reference_observations(scenario, scenario.seed + 1, 30.0, params);
  write_quality_pgm(map, refs, out_dir + "/heatmap.pgm");

  std::cout << "scenario " << scenario.name << " seed " << scenario.seed << ": mapped "
            << map.nonempty_cell_count() << " cells over " << duration
            << " s, final quality " << (series.empty() ? 0.0 : series.back().second)
            << "\n";
  return 0;
}

int cmd_localize(const std::string& scenario_path, const std::string& map_path,
                 std::uint64_t seed, bool seed_set, double duration,
                 const std::string& out_dir) {
  Scenario scenario = load_scenario_file(scenario_path);
  if (seed_set) scenario.seed = seed;
  const CrowdFlowMap map = load_map_file(map_path);
  EvalParams params;
  fs::create_directories(out_dir);

  const LocalizationRun run =
      localization_session(scenario, scenario.seed, map, duration, params);
  write_localization_csv(out_dir + "/localization.csv", run.filter_log);
  write_trajectory_csv(out_dir + "/trajectory.csv", run.trajectory);

  nlohmann::json summary{{"scenario", scenario.name},
                         {"seed", scenario.seed},
                         {"duration", duration},
                         {"mse_crowd", run.mse_est},
                         {"mse_odometry", run.mse_odom}};
  std::ofstream(out_dir + "/summary.json") << summary.dump(2) << '\n';
  std::cout << "mse_crowd " << run.mse_est << " mse_odometry " << run.mse_odom << "\n";
  return 0;
}

int cmd_plan(const std::string& scenario_path, const std::string& map_path,
             const std::string& planner_name, const std::string& out_path) {
  const Scenario scenario = load_scenario_file(scenario_path);
  const PlannerChoice choice = planner_from_string(planner_name);
  CrowdFlowMap map = choice == PlannerChoice::kAstarShortest && map_path.empty()
                         ? CrowdFlowMap::covering(scenario, 1.0)
                         : load_map_file(map_path);
  const CostWeights weights;

  const auto cell_of = [&](const Vec2& p) {
    const auto idx = map.cell_index(p);
    if (!idx) throw ConfigError("start/goal outside the map");
    return GridCellId{idx->first, idx->second};
  };
  const GridCellId start = cell_of(scenario.robot_start.position());
  const GridCellId goal = cell_of(scenario.robot_goal);

  std::optional<GridPath> path;
  if (choice == PlannerChoice::kDstarCrowd) {
    DStarPlanner dstar(map, start, goal, weights);
    path = dstar.plan();
  } else {
    path = plan_astar(map, start, goal, weights, choice == PlannerChoice::kAstarSocial);
  }
  if (!path) {
    std::cerr << "no path found\n";
    return 1;
  }
  if (!out_path.empty()) write_path_csv(out_path, *path);
  std::cout << "path cells " << path->cells.size() << " cost " << path->total_cost << "\n";
  return 0;
}

int cmd_navigate(const std::string& scenario_path, const std::string& map_path,
                 const std::string& localizer_name, const std::string& planner_name,
                 const std::string& seeds_spec, double budget, int threads,
                 const std::string& out_dir, bool save_trajectories) {
  const Scenario scenario = load_scenario_file(scenario_path);
  const LocalizerChoice localizer = localizer_from_string(localizer_name);
  const PlannerChoice planner = planner_from_string(planner_name);
  const std::vector<std::uint64_t> seeds = parse_seeds(seeds_spec);

  std::optional<CrowdFlowMap> map;
  if (!map_path.empty()) map = load_map_file(map_path);
  EvalParams params;
  fs::create_directories(out_dir);

  const auto reports = run_batch(scenario, seeds, localizer, planner, budget,
                                 map ? &*map : nullptr, params, threads);
  write_runs_csv(out_dir + "/runs.csv", reports);
  const BatchSummary summary = summarize(reports);
  std::ofstream(out_dir + "/summary.json")
      << summary_to_json(std::span<const BatchSummary>(&summary, 1)) << '\n';
  if (save_trajectories) {
    for (const RunReport& r : reports) {
      write_trajectory_csv(out_dir + "/traj_seed" + std::to_string(r.seed) + ".csv",
                           r.trajectory);
    }
  }
  std::printf("%s %s+%s: success %.0f%%, CA %.2f (%.2f), mse %.3f over %d runs\n",
              summary.scenario.c_str(), to_string(summary.localizer).c_str(),
              to_string(summary.planner).c_str(), 100.0 * summary.success_rate,
              summary.ca_mean, summary.ca_std, summary.mse_mean, summary.runs);
  return 0;
}

int cmd_replay(const std::string& log_path, const std::string& scenario_path,
               const std::string& out_dir, int stride, double scale) {
  const Scenario scenario = load_scenario_file(scenario_path);
  const auto samples = read_trajectory_csv(log_path);
  fs::create_directories(out_dir);
  if (scale <= 0.0) {
    scale = std::max(2.0, std::floor(640.0 / std::max(scenario.width, scenario.height)));
  }
  FrameRenderer renderer(scenario, scale);
  const Image background = renderer.background();

  int frame = 0;
  for (std::size_t k = 0; k < samples.size(); k += static_cast<std::size_t>(stride)) {
    Image img = background;
    for (std::size_t t = 0; t <= k; ++t) {  // true-pose trail
      img.set(renderer.px(samples[t].true_pose.x), renderer.py(samples[t].true_pose.y),
              250, 180, 180);
    }
    const TrajectorySample& s = samples[k];
    img.disc(renderer.px(s.est_pose.x), renderer.py(s.est_pose.y), 3, 40, 170, 60);
    img.disc(renderer.px(s.odom_pose.x), renderer.py(s.odom_pose.y), 3, 240, 150, 40);
    img.disc(renderer.px(s.true_pose.x), renderer.py(s.true_pose.y), 3, 220, 30, 30);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05d.ppm", frame++);
    img.write_ppm(out_dir + "/" + name);
  }
  std::cout << frame << " frames\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& runs_files, const std::string& out_path) {
  struct Row {
    std::string scenario, localizer, planner;
    bool success;
    double mse;
    int ca;
  };
  std::vector<Row> rows;
  for (const std::string& path : runs_files) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open runs file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line.rfind("scenario,", 0) == 0) continue;
      std::stringstream ss(line);
      std::vector<std::string> fields;
      std::string f;
      while (std::getline(ss, f, ',')) fields.push_back(f);
      if (fields.size() < 8) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": bad runs row");
      }
      rows.push_back({fields[0], fields[2], fields[3], fields[4] == "1",
                      std::stod(fields[6]), std::stoi(fields[7])});
    }
  }

  std::map<std::string, std::vector<Row>> groups;
  for (const Row& r : rows) groups[r.scenario + "|" + r.localizer + "|" + r.planner].push_back(r);

  nlohmann::json out = nlohmann::json::array();
  std::printf("%-12s %-10s %-15s %8s %12s %10s\n", "scenario", "localizer", "planner",
              "success", "ca mean/std", "mse mean");
  for (const auto& [key, group] : groups) {
    double ca_mean = 0.0, mse_mean = 0.0, success = 0.0;
    for (const Row& r : group) {
      ca_mean += r.ca;
      mse_mean += r.mse;
      success += r.success ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(group.size());
    ca_mean /= n;
    mse_mean /= n;
    success /= n;
    double var = 0.0;
    for (const Row& r : group) var += (r.ca - ca_mean) * (r.ca - ca_mean);
    const double ca_std = group.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    std::printf("%-12s %-10s %-15s %7.0f%% %6.2f/%-5.2f %10.3f\n",
                group[0].scenario.c_str(), group[0].localizer.c_str(),
                group[0].planner.c_str(), 100.0 * success, ca_mean, ca_std, mse_mean);
    out.push_back({{"scenario", group[0].scenario},
                   {"config",
                    {{"localizer", group[0].localizer}, {"planner", group[0].planner}}},
                   {"runs", group.size()},
                   {"success_rate", success},
                   {"ca_mean", ca_mean},
                   {"ca_std", ca_std},
                   {"mse_mean", mse_mean}});
  }
  if (!out_path.empty()) std::ofstream(out_path) << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crowd-flow mapping, localization and planning workbench"};
  app.require_subcommand(1);

  // map
  auto* map_cmd = app.add_subcommand("map", "build a crowd-flow map by touring a scenario");
  std::string map_scenario, map_out = ".";
  std::uint64_t map_seed = 0;
  double map_duration = 600.0;
  map_cmd->add_option("--scenario", map_scenario, "scenario JSON")->required();
  auto* map_seed_opt = map_cmd->add_option("--seed", map_seed, "override scenario seed");
  map_cmd->add_option("--duration", map_duration, "mapping duration (s)");
  map_cmd->add_option("-o,--out", map_out, "output directory");

  // localize
  auto* loc_cmd = app.add_subcommand("localize", "run flow-based localization on a tour");
  std::string loc_scenario, loc_map, loc_out = ".";
  std::uint64_t loc_seed = 0;
  double loc_duration = 300.0;
  loc_cmd->add_option("--scenario", loc_scenario, "scenario JSON")->required();
  loc_cmd->add_option("--map", loc_map, "prebuilt map JSON")->required();
  auto* loc_seed_opt = loc_cmd->add_option("--seed", loc_seed, "override scenario seed");
  loc_cmd->add_option("--duration", loc_duration, "run duration (s)");
  loc_cmd->add_option("-o,--out", loc_out, "output directory");

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "plan start->goal over a flow map");
  std::string plan_scenario, plan_map, plan_planner = "dstar", plan_out;
  plan_cmd->add_option("--scenario", plan_scenario, "scenario JSON")->required();
  plan_cmd->add_option("--map", plan_map, "flow map JSON");
  plan_cmd->add_option("--planner", plan_planner, "astar-shortest|astar-social|dstar");
  plan_cmd->add_option("-o,--out", plan_out, "path CSV output");

  // navigate
  auto* nav_cmd = app.add_subcommand("navigate", "closed-loop navigation episodes");
  std::string nav_scenario, nav_map, nav_localizer = "odometry",
              nav_planner = "astar-shortest", nav_seeds = "1", nav_out = ".";
  double nav_budget = 0.0;
  int nav_threads = 0;
  bool nav_save_traj = false;
  nav_cmd->add_option("--scenario", nav_scenario, "scenario JSON")->required();
  nav_cmd->add_option("--map", nav_map, "prebuilt map JSON");
  nav_cmd->add_option("--localizer", nav_localizer, "odometry|crowd");
  nav_cmd->add_option("--planner", nav_planner, "astar-shortest|astar-social|dstar");
  nav_cmd->add_option("--seeds", nav_seeds, "seed list: '1..50' or '1,4,9'");
  nav_cmd->add_option("--budget", nav_budget, "episode budget (s); 0 = auto");
  nav_cmd->add_option("--threads", nav_threads, "parallel episodes (0 = auto)");
  nav_cmd->add_option("-o,--out", nav_out, "output directory");
  nav_cmd->add_flag("--save-trajectories", nav_save_traj, "write per-run trajectory CSVs");

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "render trajectory log frames (PPM)");
  std::string rep_log, rep_scenario, rep_out = ".";
  int rep_stride = 1;
  double rep_scale = 0.0;
  replay_cmd->add_option("--log", rep_log, "trajectory CSV")->required();
  replay_cmd->add_option("--scenario", rep_scenario, "scenario JSON")->required();
  replay_cmd->add_option("-o,--out", rep_out, "frame output directory");
  replay_cmd->add_option("--stride", rep_stride, "render every Nth sample");
  replay_cmd->add_option("--scale", rep_scale, "pixels per metre (0 = auto)");

  // report
  auto* report_cmd = app.add_subcommand("report", "aggregate runs.csv files");
  std::vector<std::string> report_runs;
  std::string report_out;
  report_cmd->add_option("--runs", report_runs, "runs.csv files")->required();
  report_cmd->add_option("-o,--out", report_out, "merged summary JSON");

  try {
    app.parse(argc, argv);
    if (map_cmd->parsed()) {
      return cmd_map(map_scenario, map_seed, map_seed_opt->count() > 0, map_duration,
                     map_out);
    }
    if (loc_cmd->parsed()) {
      return cmd_localize(loc_scenario, loc_map, loc_seed, loc_seed_opt->count() > 0,
                          loc_duration, loc_out);
    }
    if (plan_cmd->parsed()) {
      return cmd_plan(plan_scenario, plan_map, plan_planner, plan_out);
    }
    if (nav_cmd->parsed()) {
      return cmd_navigate(nav_scenario, nav_map, nav_localizer, nav_planner, nav_seeds,
                          nav_budget, nav_threads, nav_out, nav_save_traj);
    }
    if (replay_cmd->parsed()) {
      return cmd_replay(rep_log, rep_scenario, rep_out, rep_stride, rep_scale);
    }
    if (report_cmd->parsed()) {
      return cmd_report(report_runs, report_out);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
