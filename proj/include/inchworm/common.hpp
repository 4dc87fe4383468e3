// Shared vector types, error type and small numeric helpers.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace inchworm {

using Vec2 = Eigen::Vector2d;  // sagittal plane (x forward, z up)
using Vec3 = Eigen::Vector3d;  // (x forward, y left, z up)
using Mat3 = Eigen::Matrix3d;

inline constexpr double kGravity = 9.81;  // m/s^2

enum class ErrorCode {
  invalid_argument,
  singular_evaluation,
  unknown_preset,
  instability,
  config,
  io,
  calibration,
};

const char* to_string(ErrorCode code);

/// Library exception; `code()` tells callers (and the CLI exit-code mapping)
/// what went wrong.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by the simulator when a node speed leaves the physical range.
class InstabilityError : public Error {
 public:
  InstabilityError(double time, const std::string& what)
      : Error(ErrorCode::instability, what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

inline Vec3 lift(const Vec2& v) { return {v.x(), 0.0, v.y()}; }
inline Vec2 sagittal(const Vec3& v) { return {v.x(), v.z()}; }

/// 2D cross product (z-component of a x b in the plane).
inline double cross2(const Vec2& a, const Vec2& b) {
  return a.x() * b.y() - a.y() * b.x();
}

/// Counter-clockwise perpendicular in the (x, z) plane.
inline Vec2 perp(const Vec2& v) { return {-v.y(), v.x()}; }

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a <= 0.0) a += two_pi;
  return a - std::numbers::pi;
}

inline void require(bool cond, const std::string& what,
                    ErrorCode code = ErrorCode::invalid_argument) {
  if (!cond) throw Error(code, what);
}

}  // namespace inchworm
