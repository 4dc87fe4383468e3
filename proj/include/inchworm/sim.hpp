// Coupled time stepping of body, coils, environment and firmware, plus the
// planar world pose driven by a reduced-order yaw law.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "inchworm/body.hpp"
#include "inchworm/commands.hpp"
#include "inchworm/environment.hpp"
#include "inchworm/firmware.hpp"
#include "inchworm/magnetics.hpp"

namespace inchworm::sim {

inline constexpr double kInstabilitySpeed = 10.0;  // m/s

struct WorldPose {
  double x = 0.0;  // m
  double y = 0.0;  // m
  double heading = 0.0;  // rad, counterclockwise seen from above
  bool operator==(const WorldPose&) const = default;
};

/// Test switches; production runs keep all of them on.
struct PhysicsToggles {
  bool gravity = true;
  bool contact = true;
  bool damping = true;
};

struct SimConfig {
  double dt = 1e-4;
  double duration = 10.0;
  double output_rate_hz = 100.0;
  Medium medium = Medium::ground;
  env::SurfaceModel surface;
  env::PresetOverrides presets;  // used when set_env selects a surface by name
  std::optional<env::WaterModel> water;  // required when medium is water
  env::Payload payload;
  body::MaterialParams material;
  body::BodyLayout layout;
  int n_nodes = 21;
  fw::GaitConfig gait;
  fw::ThermalBudgetParams thermal;
  double coil_offset = 0.0;   // [-1, 1]
  double coil_travel = 4e-3;  // lateral shift of the front coil at |offset| = 1, m
  double housing_radius = 4e-3;    // closest approach of a magnet to a coil centre, m
  double housing_stiffness = 2e4;  // N/m
  double k_turn = 0.087;      // rad/s per unit offset at 4 Hz
  bool autostart = true;      // enter the running mode at t = 0
  std::uint64_t seed = 0;
  double initial_jitter = 0.0;  // m, seeded perturbation of the settled state
  PhysicsToggles toggles;
};

/// Throws Error(config) on out-of-range settings.
void validate(const SimConfig& config);

struct SimSnapshot {
  double time = 0.0;
  WorldPose world;
  double com_velocity = 0.0;  // m/s, forward
  double front_leg_x = 0.0;   // m
  double back_leg_x = 0.0;    // m
  body::BodyState body;
  fw::FirmwareState firmware;
};

/// -k_turn * offset * (freq / 4) while walking, 0 otherwise.
double steering_yaw_rate(double coil_offset, Mode mode, double freq_hz, double k_turn);

/// Metres to centimetres and field mapping for the wire format.
TelemetryFrame snapshot_telemetry(const SimSnapshot& snapshot);

/// Coil geometry relative to the chassis frame (origin midway between the
/// outermost chassis nodes, u forward along them, w normal to them).
struct CoilMount {
  magnetics::CoilSpec spec;  // center_offset = (u, lateral, w)
  int anchor_node = -1;      // chassis node that carries the reaction
};

class Simulator {
 public:
  explicit Simulator(SimConfig config);

  const SimConfig& config() const { return config_; }
  const body::BodyMesh& mesh() const { return mesh_; }
  const body::BodyState& body() const { return state_; }
  const fw::FirmwareState& firmware() const { return firmware_; }
  const WorldPose& pose() const { return pose_; }
  const std::array<CoilMount, 2>& coils() const { return coils_; }
  std::span<const magnetics::MagnetElement> magnets() const { return magnets_; }
  double time() const { return state_.time; }
  /// Largest stable explicit step for the current mesh and contact stiffness.
  double dt_bound() const { return dt_bound_; }
  /// Drive applied during the last step.
  const magnetics::DriveState& last_drive() const { return drive_; }

  void step();
  /// Steps until `seconds` more simulated time has elapsed.
  void advance(double seconds);
  SimSnapshot snapshot() const;

  /// Routes a command through the firmware; set_env also rebuilds the body
  /// for the new surface, payload or medium and settles it in place.
  Response handle(const Command& command);

  /// Replaces the body state (tests).
  void set_body_state(const body::BodyState& state);

  /// Total forces on every node at the current state, including magnetic
  /// loads for `drive` and the explicit friction law.
  std::vector<Vec2> total_forces(const magnetics::DriveState& drive) const;

  /// Sagittal magnetic loads per node for `drive` at positions `x`.
  void add_magnetic_forces(const magnetics::DriveState& drive, std::span<const Vec2> x,
                           std::span<Vec2> out) const;

 private:
  void build();
  void settle();
  /// Contact between the magnets and the rigid coil housings.
  void add_housing_forces(std::span<const Vec2> x, std::span<Vec2> out) const;
  void add_static_loads(std::span<const Vec2> x, std::span<Vec2> out) const;

  SimConfig config_;
  body::BodyMesh mesh_;
  body::BodyState state_;
  fw::FirmwareState firmware_;
  WorldPose pose_;
  std::array<CoilMount, 2> coils_;
  std::array<magnetics::MagnetElement, 2> magnets_;
  std::array<Vec2, 2> magnet_rest_dir_;  // rest chord direction around each magnet
  std::vector<Vec2> gravity_;
  std::vector<double> inertia_x_;  // includes towed mass at the back tip
  std::vector<double> contact_damping_;
  double dt_bound_ = 0.0;
  magnetics::DriveState drive_;
  std::int64_t steps_ = 0;
  std::vector<Vec2> force_buf_;
};

using SnapshotSink = std::function<void(const SimSnapshot&)>;

/// Fixed-step run from t = 0 to `duration`, emitting a snapshot at t = 0 and
/// every 1/output_rate_hz after; nothing for a zero duration.
void run(const SimConfig& config, const SnapshotSink& sink);
std::vector<SimSnapshot> run(const SimConfig& config);

}  // namespace inchworm::sim
