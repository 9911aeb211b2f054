#pragma once

#include <cmath>
#include <iosfwd>

namespace forksim {

inline constexpr double kPi = 3.14159265358979323846;

// Normalizes an angle to (-pi, pi].
inline double normalize_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
  Vec2 rotated(double a) const {
    const double c = std::cos(a), s = std::sin(a);
    return {c * x - s * y, s * x + c * y};
  }
};

inline Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

// Planar pose; theta is kept normalized to (-pi, pi].
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2D() = default;
  Pose2D(double x_, double y_, double theta_)
      : x(x_), y(y_), theta(normalize_angle(theta_)) {}

  Vec2 position() const { return {x, y}; }

  // this * other (other expressed in this frame).
  Pose2D compose(const Pose2D& o) const {
    const Vec2 p = Vec2{o.x, o.y}.rotated(theta);
    return {x + p.x, y + p.y, theta + o.theta};
  }

  Pose2D inverse() const {
    const Vec2 p = Vec2{-x, -y}.rotated(-theta);
    return {p.x, p.y, -theta};
  }

  // other expressed in this frame: this^-1 * other.
  Pose2D between(const Pose2D& o) const { return inverse().compose(o); }

  // Maps a point from this frame to the world frame.
  Vec2 transform(const Vec2& p) const {
    const Vec2 r = p.rotated(theta);
    return {x + r.x, y + r.y};
  }

  // Maps a world point into this frame.
  Vec2 inverse_transform(const Vec2& p) const {
    return Vec2{p.x - x, p.y - y}.rotated(-theta);
  }
};

std::ostream& operator<<(std::ostream& os, const Pose2D& p);

}  // namespace forksim
