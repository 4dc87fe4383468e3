#include "inchworm/environment.hpp"

#include <algorithm>
#include <array>

namespace inchworm::env {

namespace {

struct Preset {
  std::string_view name;
  double mu_forward;
  double mu_backward;
};

// Uncalibrated friction pairs. Fitted plastic and foam values come from
// scenarios/params.json as overrides; paper sheet and office tile sit between.
constexpr std::array<Preset, 4> kPresets{{
    {"plastic_table", 0.25, 0.6},
    {"paper", 0.35, 0.8},
    {"foam", 0.6, 1.2},
    {"office_tile", 0.3, 0.7},
}};

constexpr std::array<std::string_view, 4> kPresetNames{
    kPresets[0].name, kPresets[1].name, kPresets[2].name, kPresets[3].name};

}  // namespace

void validate(const SurfaceModel& s) {
  require(s.mu_forward > 0.0, "mu_forward must be positive");
  require(s.mu_backward >= s.mu_forward, "mu_backward must be at least mu_forward");
  require(s.contact_stiffness > 0.0, "contact stiffness must be positive");
  require(std::abs(s.slope_deg) <= 30.0, "slope must lie within +/-30 degrees");
}

std::span<const std::string_view> preset_names() { return kPresetNames; }

SurfaceModel surface_preset(std::string_view name) {
  for (const Preset& p : kPresets) {
    if (p.name == name) {
      SurfaceModel s;
      s.name = std::string(p.name);
      s.mu_forward = p.mu_forward;
      s.mu_backward = p.mu_backward;
      return s;
    }
  }
  throw Error(ErrorCode::unknown_preset, "unknown surface preset '" + std::string(name) + "'");
}

SurfaceModel surface_preset(std::string_view name, const PresetOverrides& overrides) {
  SurfaceModel s = surface_preset(name);
  if (auto it = overrides.find(name); it != overrides.end()) {
    s.mu_forward = it->second.mu_forward;
    s.mu_backward = it->second.mu_backward;
    validate(s);
  }
  return s;
}

void validate(const WaterModel& w) {
  require(w.fluid_density > 0.0 && w.drag_coefficient > 0.0 && w.leg_plate_area > 0.0 &&
              w.buoyancy_volume > 0.0 && w.block_height > 0.0 && w.waterline_height > 0.0,
          "water model parameters must be positive");
}

Payload payload_for(double payload_g, bool in_water) {
  if (!in_water) return {payload_g * 1e-3, PayloadAttachment::on_chassis, 0.0};
  return {payload_g * 1e-3, PayloadAttachment::towed, 2e-4 * payload_g};
}

body::BodyMesh apply_payload(const body::BodyMesh& mesh, const Payload& payload) {
  require(payload.mass >= 0.0, "payload mass must be non-negative");
  require(payload.mass <= kMaxPayload, "payload above 200 g is outside the tested envelope");
  require(payload.tow_drag_area >= 0.0, "tow drag area must be non-negative");
  body::BodyMesh out = mesh;
  if (payload.mass == 0.0) return out;
  if (payload.attachment == PayloadAttachment::on_chassis) {
    const double share = payload.mass / static_cast<double>(out.chassis_nodes.size());
    for (int c : out.chassis_nodes) out.masses[static_cast<std::size_t>(c)] += share;
  } else {
    out.tow_mass += payload.mass;
    out.tow_drag_area += payload.tow_drag_area;
  }
  return out;
}

double normal_force(double penetration, double penetration_rate, double stiffness,
                    double damping) {
  if (penetration <= 0.0) return 0.0;
  return std::max(0.0, stiffness * penetration + damping * penetration_rate);
}

double contact_damping_for(const SurfaceModel& s, double node_mass) {
  if (s.contact_damping >= 0.0) return s.contact_damping;
  return 2.0 * std::sqrt(s.contact_stiffness * node_mass);
}

double friction_force(const SurfaceModel& s, double normal, double v) {
  return -s.mu(v) * normal * std::tanh(v / kFrictionVelocityScale);
}

std::vector<Vec2> contact_forces(const body::BodyState& state, const body::BodyMesh& mesh,
                                 const SurfaceModel& surface) {
  body::check_state(mesh, state);
  std::vector<Vec2> f(mesh.size(), Vec2::Zero());
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    const Vec2& x = state.positions[i];
    const Vec2& v = state.velocities[i];
    const double c = contact_damping_for(surface, mesh.masses[i]);
    const double n = normal_force(-x.y(), -v.y(), surface.contact_stiffness, c);
    if (n == 0.0) continue;
    f[i].y() += n;
    const int node = static_cast<int>(i);
    if (node == mesh.shoe_back || node == mesh.shoe_front) {
      f[i].x() += friction_force(surface, n, v.x());
    }
  }
  return f;
}

double submerged_fraction(const WaterModel& w, double block_z) {
  const double bottom = block_z - 0.5 * w.block_height;
  return std::clamp((w.waterline_height - bottom) / w.block_height, 0.0, 1.0);
}

void add_buoyancy(const body::BodyMesh& mesh, const WaterModel& w, std::span<const Vec2> x,
                  std::span<Vec2> out) {
  const auto top = static_cast<std::size_t>(mesh.top_node);
  out[top].y() +=
      w.fluid_density * kGravity * w.buoyancy_volume * submerged_fraction(w, x[top].y());
}

double plate_drag(const WaterModel& w, double area, double vn) {
  return -0.5 * w.fluid_density * w.drag_coefficient * area * std::abs(vn) * vn;
}

double add_drag(const body::BodyMesh& mesh, const WaterModel& w, std::span<const Vec2> x,
                std::span<const Vec2> v, std::span<Vec2> out) {
  double leg_length = 0.0;
  for (const auto& el : mesh.axial) {
    if (!(mesh.is_chassis(el.i) && mesh.is_chassis(el.j))) leg_length += el.rest_length;
  }
  double power = 0.0;
  for (const auto& el : mesh.axial) {
    if (mesh.is_chassis(el.i) && mesh.is_chassis(el.j)) continue;
    const auto a = static_cast<std::size_t>(el.i), b = static_cast<std::size_t>(el.j);
    const double za = x[a].y(), zb = x[b].y(), wl = w.waterline_height;
    double wet;
    if (za <= wl && zb <= wl) {
      wet = 1.0;
    } else if (za > wl && zb > wl) {
      continue;
    } else {
      wet = (wl - std::min(za, zb)) / std::abs(za - zb);
    }
    const Vec2 d = x[b] - x[a];
    const Vec2 n = perp(d).normalized();
    const Vec2 vm = 0.5 * (v[a] + v[b]);
    const double area = w.leg_plate_area * el.rest_length / leg_length * wet;
    const Vec2 f = plate_drag(w, area, vm.dot(n)) * n;
    out[a] += 0.5 * f;
    out[b] += 0.5 * f;
    power += f.dot(vm);
  }
  if (mesh.tow_drag_area > 0.0) {
    const auto back = static_cast<std::size_t>(mesh.shoe_back);
    const double fx = plate_drag(w, mesh.tow_drag_area, v[back].x());
    out[back].x() += fx;
    power += fx * v[back].x();
  }
  return power;
}

std::vector<Vec2> hydro_forces(const body::BodyState& state, const body::BodyMesh& mesh,
                               const WaterModel& water) {
  body::check_state(mesh, state);
  std::vector<Vec2> f(mesh.size(), Vec2::Zero());
  add_buoyancy(mesh, water, state.positions, f);
  add_drag(mesh, water, state.positions, state.velocities, f);
  return f;
}

}  // namespace inchworm::env
