#include "crowdnav/flow_map.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "crowdnav/errors.hpp"
#include "crowdnav/kmeans.hpp"
#include "json.hpp"

namespace crowdnav {

using nlohmann::json;

CrowdFlowMap::CrowdFlowMap(Vec2 origin, double resolution, int width, int height)
    : origin_(origin), resolution_(resolution), width_(width), height_(height) {
  if (resolution <= 0.0 || width <= 0 || height <= 0) {
    throw ValidationError("flow map: resolution and dimensions must be positive");
  }
  cells_.resize(static_cast<std::size_t>(width) * height);
}

CrowdFlowMap CrowdFlowMap::covering(const Scenario& s, double resolution) {
  return CrowdFlowMap({0.0, 0.0}, resolution,
                      static_cast<int>(std::ceil(s.width / resolution)),
                      static_cast<int>(std::ceil(s.height / resolution)));
}

std::optional<std::pair<int, int>> CrowdFlowMap::cell_index(const Vec2& p) const {
  const int i = static_cast<int>(std::floor((p.x - origin_.x) / resolution_));
  const int j = static_cast<int>(std::floor((p.y - origin_.y) / resolution_));
  if (!in_bounds(i, j)) return std::nullopt;
  return std::make_pair(i, j);
}

const FlowCell* CrowdFlowMap::cell_at(const Vec2& p) const {
  const auto idx = cell_index(p);
  if (!idx) return nullptr;
  return &cells_[flat(idx->first, idx->second)];
}

int CrowdFlowMap::assign_to_cells(std::span<const MovementObservation> observations,
                                  const MapperParams& params) {
  int dropped = 0;
  for (const MovementObservation& obs : observations) {
    const auto idx = cell_index(obs.start);
    if (!idx || obs.length / params.obs_window > 3.0) {
      ++dropped;
      continue;
    }
    FlowCell& cell = cells_[flat(idx->first, idx->second)];
    cell.samples.push_back(obs.velocity(params.obs_window));
    if (static_cast<int>(cell.samples.size()) > params.buffer_capacity) {
      cell.samples.erase(cell.samples.begin());
    }
    ++cell.samples_since_cluster;
  }
  dropped_ += static_cast<std::uint64_t>(dropped);
  return dropped;
}

bool CrowdFlowMap::refresh_cell(int i, int j, const MapperParams& params) {
  FlowCell& cell = cells_[flat(i, j)];
  std::vector<FlowComponent> next;
  if (!cell.samples.empty()) {
    const ClusterResult result =
        cluster_cell(cell.samples, params.max_components, params.wss_threshold,
                     params.rel_drop);
    // bin-quantize cluster means; same-bin clusters merge support-weighted
    std::map<int, FlowComponent> by_bin;
    for (const Cluster& c : result.clusters) {
      const int bin = quantize_direction(c.mean.angle());
      const double speed = std::clamp(c.mean.norm(), 0.0, 3.0);
      auto [it, inserted] = by_bin.try_emplace(bin, FlowComponent{bin, speed, c.support});
      if (!inserted) {
        FlowComponent& f = it->second;
        const double total = f.support + c.support;
        f.mean_speed = (f.mean_speed * f.support + speed * c.support) / total;
        f.support += c.support;
      }
    }
    for (auto& [bin, comp] : by_bin) next.push_back(comp);
  }
  cell.samples_since_cluster = 0;
  const bool changed = [&] {
    if (next.size() != cell.components.size()) return true;
    for (std::size_t k = 0; k < next.size(); ++k) {
      const FlowComponent& a = next[k];
      const FlowComponent& b = cell.components[k];
      if (a.direction_bin != b.direction_bin || a.mean_speed != b.mean_speed ||
          a.support != b.support) {
        return true;
      }
    }
    return false;
  }();
  cell.components = std::move(next);
  return changed;
}

std::vector<int> CrowdFlowMap::fuse(std::span<const MovementObservation> observations,
                                    const MapperParams& params) {
  std::vector<int> touched;
  for (const MovementObservation& obs : observations) {
    if (const auto idx = cell_index(obs.start)) {
      touched.push_back(static_cast<int>(flat(idx->first, idx->second)));
    }
  }
  assign_to_cells(observations, params);

  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());

  std::vector<int> changed;
  for (int id : touched) {
    const int i = id % width_;
    const int j = id / width_;
    FlowCell& cell = cells_[static_cast<std::size_t>(id)];
    const bool due = cell.samples_since_cluster >= params.refresh_every ||
                     (cell.components.empty() && !cell.samples.empty());
    if (due && refresh_cell(i, j, params)) changed.push_back(id);
  }
  return changed;
}

std::vector<int> CrowdFlowMap::refresh_all(const MapperParams& params) {
  std::vector<int> changed;
  for (int j = 0; j < height_; ++j) {
    for (int i = 0; i < width_; ++i) {
      const FlowCell& cell = cells_[flat(i, j)];
      if (cell.samples.empty() && cell.components.empty()) continue;
      if (refresh_cell(i, j, params)) changed.push_back(static_cast<int>(flat(i, j)));
    }
  }
  return changed;
}

int CrowdFlowMap::nonempty_cell_count() const {
  int n = 0;
  for (const FlowCell& c : cells_) {
    if (!c.empty()) ++n;
  }
  return n;
}

namespace {

double reference_score(const FlowCell& cell, double direction) {
  double theta_m = M_PI;
  for (const FlowComponent& c : cell.components) {
    theta_m = std::min(theta_m, angdiff(direction, bin_center(c.direction_bin)));
  }
  return (M_PI - theta_m) / M_PI;
}

}  // namespace

std::vector<double> quality_grid(const CrowdFlowMap& map,
                                 std::span<const MovementObservation> references) {
  std::vector<double> sum(static_cast<std::size_t>(map.width()) * map.height(), 0.0);
  std::vector<int> count(sum.size(), 0);
  for (const MovementObservation& ref : references) {
    const auto idx = map.cell_index(ref.start);
    if (!idx) continue;
    const std::size_t id = map.flat(idx->first, idx->second);
    sum[id] += reference_score(map.cell(idx->first, idx->second), ref.direction);
    ++count[id];
  }
  std::vector<double> grid(sum.size(), -1.0);
  for (std::size_t id = 0; id < sum.size(); ++id) {
    if (count[id] > 0) grid[id] = sum[id] / count[id];
  }
  return grid;
}

double map_quality(const CrowdFlowMap& map,
                   std::span<const MovementObservation> references) {
  if (references.empty()) {
    throw std::invalid_argument("map_quality: no reference observations");
  }
  const std::vector<double> grid = quality_grid(map, references);
  double sum = 0.0;
  int cells = 0;
  for (double q : grid) {
    if (q >= 0.0) {
      sum += q;
      ++cells;
    }
  }
  return cells > 0 ? sum / cells : 0.0;
}

std::string save_map(const CrowdFlowMap& map, bool include_samples) {
  json root;
  root["schema"] = 1;
  root["origin"] = {map.origin().x, map.origin().y};
  root["resolution"] = map.resolution();
  root["width"] = map.width();
  root["height"] = map.height();
  root["has_samples"] = include_samples;
  json cells = json::array();
  for (int j = 0; j < map.height(); ++j) {
    for (int i = 0; i < map.width(); ++i) {
      const FlowCell& cell = map.cell(i, j);
      const bool keep = !cell.components.empty() ||
                        (include_samples && !cell.samples.empty());
      if (!keep) continue;
      json jc;
      jc["i"] = i;
      jc["j"] = j;
      json comps = json::array();
      for (const FlowComponent& c : cell.components) {
        comps.push_back({{"bin", c.direction_bin},
                         {"speed", c.mean_speed},
                         {"support", c.support}});
      }
      jc["components"] = comps;
      if (include_samples) {
        json js = json::array();
        for (const Vec2& s : cell.samples) js.push_back({s.x, s.y});
        jc["samples"] = js;
      }
      cells.push_back(std::move(jc));
    }
  }
  root["cells"] = std::move(cells);
  return root.dump(2);
}

CrowdFlowMap load_map(const std::string& payload) {
  json root;
  try {
    root = json::parse(payload);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("map parse error: ") + e.what());
  }
  try {
    if (!root.is_object() || !root.contains("schema")) {
      throw ValidationError("map: missing schema");
    }
    if (root["schema"].get<int>() != 1) {
      throw ValidationError("map: unsupported schema version");
    }
    const Vec2 origin{root.at("origin")[0].get<double>(),
                      root.at("origin")[1].get<double>()};
    CrowdFlowMap map(origin, root.at("resolution").get<double>(),
                     root.at("width").get<int>(), root.at("height").get<int>());
    for (const json& jc : root.at("cells")) {
      const int i = jc.at("i").get<int>();
      const int j = jc.at("j").get<int>();
      if (!map.in_bounds(i, j)) throw ValidationError("map: cell index out of bounds");
      FlowCell& cell = map.cell_mutable(i, j);
      for (const json& jcomp : jc.at("components")) {
        FlowComponent c;
        c.direction_bin = jcomp.at("bin").get<int>();
        c.mean_speed = jcomp.at("speed").get<double>();
        c.support = jcomp.at("support").get<int>();
        if (c.direction_bin < 0 || c.direction_bin > 7 || c.support < 1 ||
            c.mean_speed < 0.0 || c.mean_speed > 3.0) {
          throw ValidationError("map: component out of range");
        }
        cell.components.push_back(c);
      }
      if (jc.contains("samples")) {
        for (const json& js : jc["samples"]) {
          cell.samples.push_back({js.at(0).get<double>(), js.at(1).get<double>()});
        }
      }
    }
    return map;
  } catch (const json::exception& e) {
    throw ParseError(std::string("map: corrupt payload: ") + e.what());
  }
}

void save_map_file(const CrowdFlowMap& map, const std::string& path,
                   bool include_samples) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open map file for writing: " + path);
  out << save_map(map, include_samples) << '\n';
}

CrowdFlowMap load_map_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open map file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_map(ss.str());
}

void write_quality_pgm(const CrowdFlowMap& map,
                       std::span<const MovementObservation> references,
                       const std::string& path) {
  const std::vector<double> grid = quality_grid(map, references);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open pgm file for writing: " + path);
  out << "P5\n" << map.width() << ' ' << map.height() << "\n255\n";
  for (int j = map.height() - 1; j >= 0; --j) {
    for (int i = 0; i < map.width(); ++i) {
      const double q = grid[map.flat(i, j)];
      const unsigned char gray =
          q < 0.0 ? 255u
                  : static_cast<unsigned char>(std::lround(255.0 * std::clamp(q, 0.0, 1.0)));
      out.put(static_cast<char>(gray));
    }
  }
}

}  // namespace crowdnav
