// Coil fields, field gradients and the magnetic body force / couple acting on
// the embedded permanent magnets.
//
// Coils are point dipoles whose moment is calibrated to a measured field
// strength. The force and couple per unit volume on magnetised material with
// remanence B^r in an applied field B^a are
//
//   f = (1/mu0) B^r . grad B^a,     m = (1/mu0) B^r x B^a,
//
// with grad(i, j) = dB_j/dx_i, so f_j = (1/mu0) sum_i B^r_i grad(i, j).
#pragma once

#include <span>
#include <string_view>

#include "inchworm/common.hpp"

namespace inchworm::magnetics {

inline constexpr double kMu0 = 4.0e-7 * std::numbers::pi;  // T m / A

/// Evaluations closer than this to a coil centre are rejected.
inline constexpr double kSingularRadius = 1e-3;

// Embedded magnet stack: nine discs per leg.
inline constexpr double kMagnetRemanence = 0.125;     // T
inline constexpr double kMagnetDiameter = 5e-3;       // m
inline constexpr double kMagnetThickness = 1.7e-3;    // m
inline constexpr int kMagnetsPerStack = 9;

enum class CoilLabel { front, back };

std::string_view to_string(CoilLabel label);

/// Measured coil characteristics used for calibration.
struct CoilMeasurement {
  double field;  // T, at the reference point
  double force;  // N, maximum pull/push on the leg magnets
  double mass;   // kg
};

inline constexpr CoilMeasurement kFrontCoilMeasurement{21.07e-3, 0.25, 11.91e-3};
inline constexpr CoilMeasurement kBackCoilMeasurement{19.4e-3, 0.20, 13.5e-3};

struct CoilSpec {
  Vec3 center_offset = Vec3::Zero();  // chassis frame, m
  Vec3 axis = Vec3::UnitZ();          // unit dipole direction
  double dipole_moment_max = 0.0;     // A m^2 at |duty| = 1
  double mass = 0.0;                  // kg
  CoilLabel label = CoilLabel::front;
};

/// Throws invalid_argument on a non-unit axis, non-positive moment or a mass
/// that does not match the labelled coil.
void validate(const CoilSpec& coil);

/// Signed H-bridge duty per coil, always within [-1, 1].
struct DriveState {
  double duty_front = 0.0;
  double duty_back = 0.0;

  static DriveState clamped(double front, double back);
  double duty(CoilLabel label) const {
    return label == CoilLabel::front ? duty_front : duty_back;
  }
  bool operator==(const DriveState&) const = default;
};

struct FieldSample {
  Vec3 b = Vec3::Zero();  // T
};

struct FieldGradient {
  Mat3 grad = Mat3::Zero();  // T/m, grad(i, j) = dB_j/dx_i
};

struct MagnetElement {
  Vec3 br = Vec3::Zero();  // remanent field, T
  double volume = 0.0;     // m^3
  int node_index = -1;
  CoilLabel label = CoilLabel::front;
};

struct WrenchDensity {
  Vec3 f = Vec3::Zero();  // N/m^3
  Vec3 m = Vec3::Zero();  // N m/m^3
};

struct Wrench {
  Vec3 force = Vec3::Zero();   // N
  Vec3 torque = Vec3::Zero();  // N m
};

/// Volume of `count` cylindrical discs.
double magnet_stack_volume(int count = kMagnetsPerStack,
                           double diameter = kMagnetDiameter,
                           double thickness = kMagnetThickness);

FieldSample coil_field(const CoilSpec& coil, double duty, const Vec3& point);
FieldGradient coil_field_gradient(const CoilSpec& coil, double duty,
                                  const Vec3& point);

Vec3 body_force_density(const Vec3& br, const FieldGradient& grad);
Vec3 body_couple_density(const Vec3& br, const Vec3& ba);
inline Vec3 body_couple_density(const Vec3& br, const FieldSample& ba) {
  return body_couple_density(br, ba.b);
}
WrenchDensity wrench_density(const Vec3& br, const FieldSample& ba,
                             const FieldGradient& grad);

/// Lumped wrench on one magnet: volume times the summed densities of every
/// coil driven at its duty. Coils must already be expressed in the frame of
/// `magnet_position` and `magnet.br`.
Wrench magnet_wrench(const MagnetElement& magnet, std::span<const CoilSpec> coils,
                     const DriveState& drive, const Vec3& magnet_position);

/// Field of a circular current loop by Biot-Savart quadrature over
/// `segments` (>= 360) equal arcs. `current_turns` is N*I in ampere-turns.
FieldSample biot_savart_loop_field(double loop_radius, double current_turns,
                                   const Vec3& center, const Vec3& axis,
                                   const Vec3& point, int segments = 720);

/// Dipole moment whose on-axis field at `reference_distance` equals
/// `target_field`: m = 2 pi d^3 B / mu0.
double calibrate_coil_moment(double target_field, double reference_distance);

/// Axial gap at which a dipole producing `field` there pulls an axially
/// magnetised element of remanence `br_norm` and volume `volume` with
/// `force`. On the axis |grad B| = 3 B / d, hence d = 3 V Br B / (mu0 F).
double calibration_gap(double field, double force, double br_norm, double volume);

}  // namespace inchworm::magnetics
