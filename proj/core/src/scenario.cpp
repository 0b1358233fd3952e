#include "crowdnav/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "crowdnav/errors.hpp"
#include "json.hpp"

namespace crowdnav {

using nlohmann::json;

Obstacle Obstacle::rect(double x, double y, double w, double h) {
  Obstacle o;
  o.shape = Shape::kRect;
  o.x = x; o.y = y; o.w = w; o.h = h;
  return o;
}

Obstacle Obstacle::circle(double cx, double cy, double r) {
  Obstacle o;
  o.shape = Shape::kCircle;
  o.x = cx; o.y = cy; o.r = r;
  return o;
}

bool Obstacle::contains(const Vec2& p) const {
  if (shape == Shape::kRect) {
    return p.x >= x && p.x <= x + w && p.y >= y && p.y <= y + h;
  }
  return (p - Vec2{x, y}).norm() <= r;
}

Vec2 Obstacle::closest_point(const Vec2& p) const {
  if (shape == Shape::kRect) {
    if (!contains(p)) {
      return {std::clamp(p.x, x, x + w), std::clamp(p.y, y, y + h)};
    }
    // inside: snap to the nearest face
    const double dl = p.x - x, dr = x + w - p.x;
    const double db = p.y - y, dt = y + h - p.y;
    const double m = std::min({dl, dr, db, dt});
    if (m == dl) return {x, p.y};
    if (m == dr) return {x + w, p.y};
    if (m == db) return {p.x, y};
    return {p.x, y + h};
  }
  const Vec2 c{x, y};
  const Vec2 d = p - c;
  const double n = d.norm();
  if (n == 0.0) return c + Vec2{r, 0.0};
  return c + d * (r / n);
}

double Obstacle::distance(const Vec2& p) const {
  if (contains(p)) return 0.0;
  return (p - closest_point(p)).norm();
}

bool Obstacle::blocks_segment(const Vec2& a, const Vec2& b) const {
  if (shape == Shape::kRect) {
    return segment_intersects_aabb(a, b, {x, y}, {x + w, y + h});
  }
  return segment_intersects_circle(a, b, {x, y}, r);
}

double Lane::length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    len += (waypoints[i] - waypoints[i - 1]).norm();
  }
  return len;
}

int Scenario::target_agent_count() const {
  if (lanes.empty()) return 0;
  return static_cast<int>(std::lround(density * width * height));
}

namespace {

void require_keys(const json& obj, const std::string& where,
                  std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) { known = true; break; }
    }
    if (!known) {
      throw ValidationError(where + ": unknown key '" + it.key() + "'");
    }
  }
}

double number_at(const json& obj, const std::string& where, const char* key) {
  if (!obj.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
  if (!obj[key].is_number()) throw ValidationError(where + "." + key + ": expected a number");
  return obj[key].get<double>();
}

Vec2 point_at(const json& arr, const std::string& where) {
  if (!arr.is_array() || arr.size() != 2 || !arr[0].is_number() || !arr[1].is_number()) {
    throw ValidationError(where + ": expected [x, y]");
  }
  return {arr[0].get<double>(), arr[1].get<double>()};
}

}  // namespace

Scenario load_scenario(const std::string& config_text) {
  json root;
  try {
    root = json::parse(config_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scenario parse error: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("scenario: top level must be an object");

  require_keys(root, "scenario",
               {"schema", "name", "extent", "obstacles", "lanes", "density", "robot", "seed"});
  if (!root.contains("schema") || !root["schema"].is_number_integer() ||
      root["schema"].get<int>() != 1) {
    throw ValidationError("scenario.schema: expected 1");
  }

  Scenario s;
  if (root.contains("name")) {
    if (!root["name"].is_string()) throw ValidationError("scenario.name: expected a string");
    s.name = root["name"].get<std::string>();
  }

  if (!root.contains("extent")) throw ValidationError("scenario: missing 'extent'");
  const json& ext = root["extent"];
  require_keys(ext, "extent", {"w", "h"});
  s.width = number_at(ext, "extent", "w");
  s.height = number_at(ext, "extent", "h");
  if (s.width <= 0.0 || s.height <= 0.0) {
    throw ValidationError("extent: width and height must be positive");
  }

  if (root.contains("obstacles")) {
    if (!root["obstacles"].is_array()) throw ValidationError("obstacles: expected an array");
    int idx = 0;
    for (const json& jo : root["obstacles"]) {
      const std::string where = "obstacles[" + std::to_string(idx++) + "]";
      if (!jo.is_object() || !jo.contains("type") || !jo["type"].is_string()) {
        throw ValidationError(where + ": expected {type, ...}");
      }
      const std::string type = jo["type"].get<std::string>();
      Obstacle o;
      if (type == "rect") {
        require_keys(jo, where, {"type", "x", "y", "w", "h"});
        o = Obstacle::rect(number_at(jo, where, "x"), number_at(jo, where, "y"),
                           number_at(jo, where, "w"), number_at(jo, where, "h"));
        if (o.w <= 0.0 || o.h <= 0.0) throw ValidationError(where + ": w/h must be positive");
        if (!s.in_extent({o.x, o.y}) || !s.in_extent({o.x + o.w, o.y + o.h})) {
          throw ValidationError(where + ": outside extent");
        }
      } else if (type == "circle") {
        require_keys(jo, where, {"type", "x", "y", "r"});
        o = Obstacle::circle(number_at(jo, where, "x"), number_at(jo, where, "y"),
                             number_at(jo, where, "r"));
        if (o.r <= 0.0) throw ValidationError(where + ": r must be positive");
        if (!s.in_extent({o.x - o.r, o.y - o.r}) || !s.in_extent({o.x + o.r, o.y + o.r})) {
          throw ValidationError(where + ": outside extent");
        }
      } else {
        throw ValidationError(where + ".type: expected 'rect' or 'circle'");
      }
      s.obstacles.push_back(o);
    }
  }

  if (root.contains("lanes")) {
    if (!root["lanes"].is_array()) throw ValidationError("lanes: expected an array");
    int idx = 0;
    for (const json& jl : root["lanes"]) {
      const std::string where = "lanes[" + std::to_string(idx++) + "]";
      if (!jl.is_object()) throw ValidationError(where + ": expected an object");
      require_keys(jl, where, {"waypoints", "rate", "bidirectional"});
      Lane lane;
      if (!jl.contains("waypoints") || !jl["waypoints"].is_array()) {
        throw ValidationError(where + ": missing 'waypoints' array");
      }
      int widx = 0;
      for (const json& jw : jl["waypoints"]) {
        const std::string wwhere = where + ".waypoints[" + std::to_string(widx++) + "]";
        const Vec2 p = point_at(jw, wwhere);
        if (!s.in_extent(p)) throw ValidationError(wwhere + ": outside extent");
        lane.waypoints.push_back(p);
      }
      if (lane.waypoints.size() < 2) {
        throw ValidationError(where + ": a lane needs at least 2 waypoints");
      }
      if (jl.contains("rate")) {
        lane.rate = number_at(jl, where, "rate");
        if (lane.rate < 0.0) throw ValidationError(where + ".rate: must be >= 0");
      }
      if (jl.contains("bidirectional")) {
        if (!jl["bidirectional"].is_boolean()) {
          throw ValidationError(where + ".bidirectional: expected a bool");
        }
        lane.bidirectional = jl["bidirectional"].get<bool>();
      }
      s.lanes.push_back(std::move(lane));
    }
  }

  if (root.contains("density")) {
    if (!root["density"].is_number()) throw ValidationError("density: expected a number");
    s.density = root["density"].get<double>();
    if (s.density < 0.0) throw ValidationError("density: must be >= 0");
  }

  if (!root.contains("robot")) throw ValidationError("scenario: missing 'robot'");
  const json& jr = root["robot"];
  require_keys(jr, "robot", {"start", "goal"});
  if (!jr.contains("start") || !jr["start"].is_array() || jr["start"].size() != 3) {
    throw ValidationError("robot.start: expected [x, y, theta]");
  }
  s.robot_start = {jr["start"][0].get<double>(), jr["start"][1].get<double>(),
                   normalize_angle(jr["start"][2].get<double>())};
  if (!jr.contains("goal")) throw ValidationError("robot: missing 'goal'");
  s.robot_goal = point_at(jr["goal"], "robot.goal");
  if (!s.in_extent(s.robot_start.position())) {
    throw ValidationError("robot.start: outside extent");
  }
  if (!s.in_extent(s.robot_goal)) throw ValidationError("robot.goal: outside extent");

  if (root.contains("seed")) {
    if (!root["seed"].is_number_unsigned()) {
      throw ValidationError("seed: expected an unsigned integer");
    }
    s.seed = root["seed"].get<std::uint64_t>();
  }
  return s;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_scenario(ss.str());
}

std::string scenario_to_json(const Scenario& s) {
  json root;
  root["schema"] = 1;
  root["name"] = s.name;
  root["extent"] = {{"w", s.width}, {"h", s.height}};
  root["obstacles"] = json::array();
  for (const Obstacle& o : s.obstacles) {
    if (o.shape == Obstacle::Shape::kRect) {
      root["obstacles"].push_back(
          {{"type", "rect"}, {"x", o.x}, {"y", o.y}, {"w", o.w}, {"h", o.h}});
    } else {
      root["obstacles"].push_back({{"type", "circle"}, {"x", o.x}, {"y", o.y}, {"r", o.r}});
    }
  }
  root["lanes"] = json::array();
  for (const Lane& l : s.lanes) {
    json jw = json::array();
    for (const Vec2& w : l.waypoints) jw.push_back({w.x, w.y});
    root["lanes"].push_back(
        {{"waypoints", jw}, {"rate", l.rate}, {"bidirectional", l.bidirectional}});
  }
  root["density"] = s.density;
  root["robot"] = {{"start", {s.robot_start.x, s.robot_start.y, s.robot_start.theta}},
                   {"goal", {s.robot_goal.x, s.robot_goal.y}}};
  root["seed"] = s.seed;
  return root.dump(2);
}

}  // namespace crowdnav
