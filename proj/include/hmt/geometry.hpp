#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hmt {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double norm() const { return std::hypot(x, y); }
  constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y); }

  friend constexpr bool operator==(Vec2, Vec2) = default;
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

inline Vec2 unit(double heading) { return {std::cos(heading), std::sin(heading)}; }

/// Bearing of `to` seen from `from`, in (-pi, pi].
inline double bearing(Vec2 from, Vec2 to) { return std::atan2(to.y - from.y, to.x - from.x); }

/// Wraps into [0, 2pi).
inline double normalize_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Wraps into [-pi, pi).
inline double wrap_pi(double a) {
  double r = std::fmod(a + kPi, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r - kPi;
}

}  // namespace hmt
