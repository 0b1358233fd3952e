#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowdnav/geometry.hpp"
#include "crowdnav/observation.hpp"
#include "crowdnav/scenario.hpp"

namespace crowdnav {

// Heading bin k covers k*pi/4 +- pi/8. Boundary headings (odd multiples of
// pi/8) round half-up before the mod, so +pi/8 lands in bin 1.
inline int quantize_direction(double theta) {
  const double x = normalize_angle(theta) / (M_PI / 4.0);
  const int b = static_cast<int>(std::floor(x + 0.5));
  return ((b % 8) + 8) % 8;
}

inline double bin_center(int bin) { return normalize_angle(bin * (M_PI / 4.0)); }

inline Vec2 bin_unit(int bin) {
  const double a = bin_center(bin);
  return {std::cos(a), std::sin(a)};
}

struct FlowComponent {
  int direction_bin = 0;     // 0..7
  double mean_speed = 0.0;   // m/s, in [0, 3]
  int support = 0;           // samples behind this component
};

struct FlowCell {
  std::vector<FlowComponent> components;  // at most 8, unique bins, sorted by bin
  std::vector<Vec2> samples;              // raw velocity buffer, oldest first
  int samples_since_cluster = 0;

  bool empty() const { return components.empty() && samples.empty(); }
};

struct MapperParams {
  double resolution = 1.0;   // m per cell
  int max_components = 4;    // clusters attempted per cell (N_c)
  double wss_threshold = 0.5;
  double rel_drop = 0.25;
  int buffer_capacity = 256;
  int refresh_every = 16;    // re-cluster after this many new samples
  double obs_window = 1.0;   // s, converts observation length to speed
};

// Global grid of per-cell crowd-flow components built online from movement
// observations.
class CrowdFlowMap {
 public:
  CrowdFlowMap() = default;
  CrowdFlowMap(Vec2 origin, double resolution, int width, int height);

  // Grid with origin (0,0) covering the scenario extent.
  static CrowdFlowMap covering(const Scenario& s, double resolution);

  int width() const { return width_; }
  int height() const { return height_; }
  Vec2 origin() const { return origin_; }
  double resolution() const { return resolution_; }

  bool in_bounds(int i, int j) const {
    return i >= 0 && j >= 0 && i < width_ && j < height_;
  }
  // floor((p - origin) / resolution); nullopt off-map
  std::optional<std::pair<int, int>> cell_index(const Vec2& p) const;
  const FlowCell& cell(int i, int j) const { return cells_[flat(i, j)]; }
  FlowCell& cell_mutable(int i, int j) { return cells_[flat(i, j)]; }
  // nullptr when p is off-map
  const FlowCell* cell_at(const Vec2& p) const;
  Vec2 cell_center(int i, int j) const {
    return origin_ + Vec2{(i + 0.5) * resolution_, (j + 0.5) * resolution_};
  }
  std::size_t flat(int i, int j) const {
    return static_cast<std::size_t>(j) * width_ + i;
  }

  // Appends each observation's velocity sample to the buffer of the cell
  // containing its start point (global frame expected). Returns the number
  // of observations dropped (off-map or beyond the speed sanity bound).
  int assign_to_cells(std::span<const MovementObservation> observations,
                      const MapperParams& params);

  // Re-clusters one cell's buffer into flow components (same-bin clusters are
  // merged support-weighted). Returns true if the components changed.
  bool refresh_cell(int i, int j, const MapperParams& params);

  // assign_to_cells plus refresh of every touched cell that is due
  // (refresh_every new samples, or never clustered). Returns the flat ids of
  // cells whose components changed, sorted.
  std::vector<int> fuse(std::span<const MovementObservation> observations,
                        const MapperParams& params);

  // Clusters every cell holding samples; returns changed flat ids, sorted.
  std::vector<int> refresh_all(const MapperParams& params);

  std::uint64_t dropped_observations() const { return dropped_; }
  int nonempty_cell_count() const;

 private:
  Vec2 origin_;
  double resolution_ = 1.0;
  int width_ = 0;
  int height_ = 0;
  std::vector<FlowCell> cells_;
  std::uint64_t dropped_ = 0;
};

// Mean over observation-bearing cells of the per-reference angular score
// q_hat = (pi - theta_m) / pi, where theta_m is the angle between the
// reference direction and the nearest component bin centre (pi when the cell
// holds no components). Throws if `references` is empty.
double map_quality(const CrowdFlowMap& map,
                   std::span<const MovementObservation> references);

// Per-cell mean q_hat; cells without references get -1.
std::vector<double> quality_grid(const CrowdFlowMap& map,
                                 std::span<const MovementObservation> references);

// Serialization (schema 1). Raw sample buffers are optional and flagged.
std::string save_map(const CrowdFlowMap& map, bool include_samples = false);
CrowdFlowMap load_map(const std::string& payload);
void save_map_file(const CrowdFlowMap& map, const std::string& path,
                   bool include_samples = false);
CrowdFlowMap load_map_file(const std::string& path);

// Binary PGM, one pixel per cell, gray = 255 * (1 - quality loss); cells
// without references render white.
void write_quality_pgm(const CrowdFlowMap& map,
                       std::span<const MovementObservation> references,
                       const std::string& path);

}  // namespace crowdnav
