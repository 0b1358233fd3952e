#pragma once

#include <string>
#include <vector>

#include "crowdnav/geometry.hpp"
#include "crowdnav/planner.hpp"

namespace crowdnav {

// One row of the trajectory log:
// t,true_x,true_y,true_th,odom_x,odom_y,odom_th,est_x,est_y,est_th,cmd_vx,cmd_vy
struct TrajectorySample {
  double t = 0.0;
  Pose2 true_pose;
  Pose2 odom_pose;
  Pose2 est_pose;
  Vec2 cmd;

  bool operator==(const TrajectorySample&) const = default;
};

// One row of the localization log: t,est_x,est_y,est_th,ess,n_obs
struct LocalizationSample {
  double t = 0.0;
  Pose2 est_pose;
  double ess = 0.0;
  int n_obs = 0;
};

void write_trajectory_csv(const std::string& path,
                          const std::vector<TrajectorySample>& samples);
std::vector<TrajectorySample> read_trajectory_csv(const std::string& path);

void write_localization_csv(const std::string& path,
                            const std::vector<LocalizationSample>& samples);

// idx,cell_i,cell_j,x,y,edge_cost
void write_path_csv(const std::string& path, const GridPath& grid_path);

// t,quality
void write_quality_csv(const std::string& path,
                       const std::vector<std::pair<double, double>>& series);

}  // namespace crowdnav
