#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace crowdnav {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }
  bool operator==(const Vec2& o) const { return x == o.x && y == o.y; }

  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  // z-component of the 3D cross product
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double norm_sq() const { return x * x + y * y; }

  Vec2 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec2{x / n, y / n} : Vec2{0.0, 0.0};
  }
  Vec2 rotated(double angle) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * x - s * y, s * x + c * y};
  }
  Vec2 perp() const { return {-y, x}; }
  double angle() const { return std::atan2(y, x); }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

// Maps any finite angle into (-pi, pi].
inline double normalize_angle(double a) {
  double r = std::remainder(a, 2.0 * M_PI);
  if (r <= -M_PI) r = M_PI;
  return r;
}

// Absolute angular distance in [0, pi].
inline double angdiff(double a, double b) {
  return std::abs(normalize_angle(a - b));
}

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  bool operator==(const Pose2& o) const {
    return x == o.x && y == o.y && theta == o.theta;
  }

  Vec2 position() const { return {x, y}; }

  // Applies a body-frame delta (dx, dy, dtheta); the canonical odometry
  // composition used everywhere so folds reproduce poses bit-exactly.
  Pose2 compose(const Pose2& delta) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {x + c * delta.x - s * delta.y,
            y + s * delta.x + c * delta.y,
            normalize_angle(theta + delta.theta)};
  }

  Vec2 transform_point(const Vec2& local) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {x + c * local.x - s * local.y, y + s * local.x + c * local.y};
  }

  Vec2 inverse_transform_point(const Vec2& world) const {
    const double c = std::cos(theta), s = std::sin(theta);
    const double dx = world.x - x, dy = world.y - y;
    return {c * dx + s * dy, -s * dx + c * dy};
  }
};

// Distance from point p to segment [a, b].
inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len_sq = ab.norm_sq();
  if (len_sq == 0.0) return (p - a).norm();
  double t = (p - a).dot(ab) / len_sq;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}

// True if segment [a, b] intersects the axis-aligned box [lo, hi]
// (slab method; touching counts as intersecting).
inline bool segment_intersects_aabb(Vec2 a, Vec2 b, Vec2 lo, Vec2 hi) {
  const Vec2 d = b - a;
  double tmin = 0.0, tmax = 1.0;
  for (int axis = 0; axis < 2; ++axis) {
    const double da = axis == 0 ? d.x : d.y;
    const double pa = axis == 0 ? a.x : a.y;
    const double mn = axis == 0 ? lo.x : lo.y;
    const double mx = axis == 0 ? hi.x : hi.y;
    if (std::abs(da) < 1e-12) {
      if (pa < mn || pa > mx) return false;
    } else {
      double t1 = (mn - pa) / da;
      double t2 = (mx - pa) / da;
      if (t1 > t2) std::swap(t1, t2);
      tmin = std::max(tmin, t1);
      tmax = std::min(tmax, t2);
      if (tmin > tmax) return false;
    }
  }
  return true;
}

// True if segment [a, b] passes within r of center c.
inline bool segment_intersects_circle(const Vec2& a, const Vec2& b,
                                      const Vec2& c, double r) {
  return point_segment_distance(c, a, b) <= r;
}

// FNV-1a over raw bytes; used for state digests in determinism checks.
class Fnv1a {
 public:
  void add_bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x00000100000001b3ull;
    }
  }
  void add(double v) { add_bytes(&v, sizeof(v)); }
  void add(std::uint64_t v) { add_bytes(&v, sizeof(v)); }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

}  // namespace crowdnav
