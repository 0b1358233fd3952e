#include "crowdnav/logs.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "crowdnav/errors.hpp"

namespace crowdnav {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open file for writing: " + path);
  return out;
}

std::vector<double> split_row(const std::string& line, std::size_t expected,
                              const std::string& path, int lineno) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    try {
      out.push_back(std::stod(field));
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad number '" + field + "'");
    }
  }
  if (out.size() != expected) {
    throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                     std::to_string(expected) + " fields");
  }
  return out;
}

}  // namespace

void write_trajectory_csv(const std::string& path,
                          const std::vector<TrajectorySample>& samples) {
  auto out = open_out(path);
  out << "t,true_x,true_y,true_th,odom_x,odom_y,odom_th,est_x,est_y,est_th,cmd_vx,cmd_vy\n";
  for (const TrajectorySample& s : samples) {
    out << fmt(s.t) << ',' << fmt(s.true_pose.x) << ',' << fmt(s.true_pose.y) << ','
        << fmt(s.true_pose.theta) << ',' << fmt(s.odom_pose.x) << ',' << fmt(s.odom_pose.y)
        << ',' << fmt(s.odom_pose.theta) << ',' << fmt(s.est_pose.x) << ','
        << fmt(s.est_pose.y) << ',' << fmt(s.est_pose.theta) << ',' << fmt(s.cmd.x) << ','
        << fmt(s.cmd.y) << '\n';
  }
}

std::vector<TrajectorySample> read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trajectory log: " + path);
  std::vector<TrajectorySample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("t,", 0) == 0) continue;
    const auto v = split_row(line, 12, path, lineno);
    TrajectorySample s;
    s.t = v[0];
    s.true_pose = {v[1], v[2], v[3]};
    s.odom_pose = {v[4], v[5], v[6]};
    s.est_pose = {v[7], v[8], v[9]};
    s.cmd = {v[10], v[11]};
    out.push_back(s);
  }
  return out;
}

void write_localization_csv(const std::string& path,
                            const std::vector<LocalizationSample>& samples) {
  auto out = open_out(path);
  out << "t,est_x,est_y,est_th,ess,n_obs\n";
  for (const LocalizationSample& s : samples) {
    out << fmt(s.t) << ',' << fmt(s.est_pose.x) << ',' << fmt(s.est_pose.y) << ','
        << fmt(s.est_pose.theta) << ',' << fmt(s.ess) << ',' << s.n_obs << '\n';
  }
}

void write_path_csv(const std::string& path, const GridPath& grid_path) {
  auto out = open_out(path);
  out << "idx,cell_i,cell_j,x,y,edge_cost\n";
  for (std::size_t k = 0; k < grid_path.cells.size(); ++k) {
    out << k << ',' << grid_path.cells[k].i << ',' << grid_path.cells[k].j << ','
        << fmt(grid_path.world_points[k].x) << ',' << fmt(grid_path.world_points[k].y)
        << ',' << fmt(grid_path.edge_costs[k]) << '\n';
  }
}

void write_quality_csv(const std::string& path,
                       const std::vector<std::pair<double, double>>& series) {
  auto out = open_out(path);
  out << "t,quality\n";
  for (const auto& [t, q] : series) {
    out << fmt(t) << ',' << fmt(q) << '\n';
  }
}

}  // namespace crowdnav
