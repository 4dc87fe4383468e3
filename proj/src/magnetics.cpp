#include "inchworm/magnetics.hpp"

#include <algorithm>
#include <array>
#include <vector>

#include "inchworm/simd/field_kernels.hpp"

namespace inchworm::magnetics {

namespace {

void guard_distance(const Vec3& r, double radius) {
  if (!(r.norm() >= radius)) {
    throw Error(ErrorCode::singular_evaluation,
                "field evaluated within " + std::to_string(radius * 1e3) +
                    " mm of a source");
  }
}

// Single-pair evaluation through the scalar reference kernel.
void dipole_at(const Vec3& moment, const Vec3& r, Vec3* b, Mat3* grad) {
  std::array<double, 3> rr{r.x(), r.y(), r.z()};
  std::array<double, 3> mm{moment.x(), moment.y(), moment.z()};
  std::array<double, 3> out{};
  std::array<double, 9> g{};
  simd::DipoleBatch batch{{&rr[0], 1}, {&rr[1], 1}, {&rr[2], 1},
                          {&mm[0], 1}, {&mm[1], 1}, {&mm[2], 1},
                          {&out[0], 1}, {&out[1], 1}, {&out[2], 1},
                          {}};
  if (grad != nullptr) {
    for (int c = 0; c < 9; ++c) batch.g[c] = {&g[c], 1};
  }
  simd::dipole_pairs_scalar(batch);
  if (b != nullptr) *b = Vec3(out[0], out[1], out[2]);
  if (grad != nullptr) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) (*grad)(i, j) = g[3 * i + j];
    }
  }
}

}  // namespace

std::string_view to_string(CoilLabel label) {
  return label == CoilLabel::front ? "front" : "back";
}

void validate(const CoilSpec& coil) {
  require(std::abs(coil.axis.norm() - 1.0) <= 1e-9, "coil axis must be a unit vector");
  require(coil.dipole_moment_max > 0.0, "coil dipole moment must be positive");
  const double expected = coil.label == CoilLabel::front ? kFrontCoilMeasurement.mass
                                                         : kBackCoilMeasurement.mass;
  require(std::abs(coil.mass - expected) <= 1e-9,
          std::string("unexpected mass for the ") + std::string(to_string(coil.label)) +
              " coil");
}

DriveState DriveState::clamped(double front, double back) {
  return {std::clamp(front, -1.0, 1.0), std::clamp(back, -1.0, 1.0)};
}

double magnet_stack_volume(int count, double diameter, double thickness) {
  require(count > 0 && diameter > 0.0 && thickness > 0.0, "bad magnet geometry");
  return count * std::numbers::pi * 0.25 * diameter * diameter * thickness;
}

FieldSample coil_field(const CoilSpec& coil, double duty, const Vec3& point) {
  const Vec3 r = point - coil.center_offset;
  guard_distance(r, kSingularRadius);
  FieldSample out;
  if (duty == 0.0) return out;
  dipole_at(duty * coil.dipole_moment_max * coil.axis, r, &out.b, nullptr);
  return out;
}

FieldGradient coil_field_gradient(const CoilSpec& coil, double duty, const Vec3& point) {
  const Vec3 r = point - coil.center_offset;
  guard_distance(r, kSingularRadius);
  FieldGradient out;
  if (duty == 0.0) return out;
  dipole_at(duty * coil.dipole_moment_max * coil.axis, r, nullptr, &out.grad);
  return out;
}

Vec3 body_force_density(const Vec3& br, const FieldGradient& grad) {
  return grad.grad.transpose() * br / kMu0;
}

Vec3 body_couple_density(const Vec3& br, const Vec3& ba) { return br.cross(ba) / kMu0; }

WrenchDensity wrench_density(const Vec3& br, const FieldSample& ba,
                             const FieldGradient& grad) {
  return {body_force_density(br, grad), body_couple_density(br, ba)};
}

Wrench magnet_wrench(const MagnetElement& magnet, std::span<const CoilSpec> coils,
                     const DriveState& drive, const Vec3& magnet_position) {
  Wrench w;
  for (const CoilSpec& coil : coils) {
    const double duty = drive.duty(coil.label);
    const FieldSample ba = coil_field(coil, duty, magnet_position);
    const FieldGradient grad = coil_field_gradient(coil, duty, magnet_position);
    w.force += body_force_density(magnet.br, grad);
    w.torque += body_couple_density(magnet.br, ba);
  }
  w.force *= magnet.volume;
  w.torque *= magnet.volume;
  return w;
}

FieldSample biot_savart_loop_field(double loop_radius, double current_turns,
                                   const Vec3& center, const Vec3& axis,
                                   const Vec3& point, int segments) {
  require(loop_radius > 0.0, "loop radius must be positive");
  require(segments >= 360, "Biot-Savart quadrature needs at least 360 segments");
  require(std::abs(axis.norm() - 1.0) <= 1e-9, "loop axis must be a unit vector");

  // In-plane orthonormal basis (u, v) with u x v = axis.
  const Vec3 helper = std::abs(axis.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 u = axis.cross(helper).normalized();
  const Vec3 v = axis.cross(u);

  // Distance from the wire: project onto the loop plane.
  const Vec3 rel = point - center;
  const double h = rel.dot(axis);
  const double rho = (rel - h * axis).norm();
  const double wire_distance = std::hypot(rho - loop_radius, h);
  if (!(wire_distance >= 1e-4)) {
    throw Error(ErrorCode::singular_evaluation, "point lies on the loop wire");
  }

  // Midpoint rule in the angle; spectrally accurate for this periodic integrand.
  const std::size_t n = static_cast<std::size_t>(segments);
  std::vector<double> buf(6 * n);
  const std::span<double> px(buf.data(), n), py(buf.data() + n, n),
      pz(buf.data() + 2 * n, n), dlx(buf.data() + 3 * n, n), dly(buf.data() + 4 * n, n),
      dlz(buf.data() + 5 * n, n);
  const double dphi = 2.0 * std::numbers::pi / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double phi = (static_cast<double>(k) + 0.5) * dphi;
    const Vec3 p = center + loop_radius * (std::cos(phi) * u + std::sin(phi) * v);
    const Vec3 t = loop_radius * dphi * (-std::sin(phi) * u + std::cos(phi) * v);
    px[k] = p.x();
    py[k] = p.y();
    pz[k] = p.z();
    dlx[k] = t.x();
    dly[k] = t.y();
    dlz[k] = t.z();
  }
  const simd::Sum3 s =
      simd::loop_sum({px, py, pz, dlx, dly, dlz}, point.x(), point.y(), point.z());
  const double k = kMu0 * current_turns / (4.0 * std::numbers::pi);
  return {Vec3(s.x, s.y, s.z) * k};
}

double calibrate_coil_moment(double target_field, double reference_distance) {
  require(target_field > 0.0, "calibration target field must be positive");
  require(reference_distance >= 2e-3, "reference distance must be at least 2 mm");
  const double d3 = reference_distance * reference_distance * reference_distance;
  return 2.0 * std::numbers::pi * d3 * target_field / kMu0;
}

double calibration_gap(double field, double force, double br_norm, double volume) {
  require(field > 0.0 && force > 0.0 && br_norm > 0.0 && volume > 0.0,
          "calibration gap inputs must be positive");
  return 3.0 * volume * br_norm * field / (kMu0 * force);
}

}  // namespace inchworm::magnetics
