// Ground contact (penalty normal force, anisotropic regularised Coulomb
// friction), water (foam-block buoyancy, quadratic plate drag) and payloads.
//
// Forces are expressed in the sagittal frame of the surface: x runs along the
// slope toward the robot heading, z is the surface normal, and the surface
// itself is the line z = 0.
#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "inchworm/body.hpp"

namespace inchworm::env {

inline constexpr double kFrictionVelocityScale = 1e-3;  // m/s
inline constexpr double kMaxPayload = 0.2;              // kg

struct SurfaceModel {
  std::string name = "plastic_table";
  double mu_forward = 0.25;
  double mu_backward = 0.6;
  double slope_deg = 0.0;
  double contact_stiffness = 5e3;  // N/m
  double contact_damping = -1.0;   // N s/m; negative means critical per node

  double mu(double slip_velocity) const {
    return slip_velocity > 0.0 ? mu_forward : mu_backward;
  }
};

void validate(const SurfaceModel& surface);

/// Names accepted by surface_preset, in a fixed order.
std::span<const std::string_view> preset_names();

/// Calibrated presets; slope is always 0. Throws unknown_preset.
SurfaceModel surface_preset(std::string_view name);

/// Per-name overrides of mu_forward / mu_backward loaded from a parameter
/// file. Entries not present fall back to the built-in preset.
struct FrictionOverride {
  double mu_forward = 0.0;
  double mu_backward = 0.0;
};
using PresetOverrides = std::map<std::string, FrictionOverride, std::less<>>;

SurfaceModel surface_preset(std::string_view name, const PresetOverrides& overrides);

struct WaterModel {
  double fluid_density = 1000.0;     // kg/m^3
  double drag_coefficient = 1.28;    // flat plate
  double leg_plate_area = 1.2e-3;    // m^2, both legs together
  double buoyancy_volume = 2.0e-4;   // m^3, foam block
  double block_height = 0.02;        // m
  double waterline_height = 0.045;   // m, in the body frame
};

void validate(const WaterModel& water);

enum class PayloadAttachment { on_chassis, towed };

struct Payload {
  double mass = 0.0;  // kg
  PayloadAttachment attachment = PayloadAttachment::on_chassis;
  double tow_drag_area = 0.0;  // m^2, towed only
};

/// Chassis payloads add mass to the chassis nodes. A towed payload floats on
/// its own and is linked rigidly to the back tip: it adds horizontal inertia
/// and drag there, but no weight.
/// Payload as set_env places it: on the chassis on ground, towed on a small
/// raft in water (drag area grows with the load, 2 cm^2 per gram).
Payload payload_for(double payload_g, bool in_water);

body::BodyMesh apply_payload(const body::BodyMesh& mesh, const Payload& payload);

/// Normal force law shared by the explicit evaluation and the time stepper:
/// N = max(0, k delta + c delta_rate), zero when out of contact.
double normal_force(double penetration, double penetration_rate, double stiffness,
                    double damping);

double contact_damping_for(const SurfaceModel& surface, double node_mass);

/// Regularised friction on a shoe with normal load n sliding at v (m/s).
double friction_force(const SurfaceModel& surface, double normal, double slip_velocity);

std::vector<Vec2> contact_forces(const body::BodyState& state, const body::BodyMesh& mesh,
                                 const SurfaceModel& surface);

/// Fraction of the foam block below the waterline, given the z of the node
/// carrying it (block centred on the node).
double submerged_fraction(const WaterModel& water, double block_z);

/// Buoyancy at the top node plus quadratic drag on submerged leg segments.
std::vector<Vec2> hydro_forces(const body::BodyState& state, const body::BodyMesh& mesh,
                               const WaterModel& water);

/// Buoyancy part only (position dependent; used for the floating equilibrium).
void add_buoyancy(const body::BodyMesh& mesh, const WaterModel& water,
                  std::span<const Vec2> x, std::span<Vec2> out);

/// Drag part only; returns the power of the drag forces (always <= 0).
double add_drag(const body::BodyMesh& mesh, const WaterModel& water, std::span<const Vec2> x,
                std::span<const Vec2> v, std::span<Vec2> out);

/// Drag on a plate of area `area` moving at normal speed `vn`: signed force
/// -1/2 rho Cd A |vn| vn.
double plate_drag(const WaterModel& water, double area, double vn);

}  // namespace inchworm::env
