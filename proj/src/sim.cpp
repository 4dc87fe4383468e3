#include "inchworm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "inchworm/simd/field_kernels.hpp"

namespace inchworm::sim {

namespace {

struct ChassisFrame {
  Vec2 origin;
  Vec2 u;  // forward along the chassis
  Vec2 w;  // chassis normal
};

ChassisFrame chassis_frame(const body::BodyMesh& mesh, std::span<const Vec2> x) {
  const Vec2& back = x[static_cast<std::size_t>(mesh.chassis_nodes.front())];
  const Vec2& front = x[static_cast<std::size_t>(mesh.chassis_nodes.back())];
  const Vec2 u = (front - back).normalized();
  return {0.5 * (front + back), u, perp(u)};
}

// Equal and opposite forces on two nodes whose moment is `torque`.
void apply_couple(std::span<Vec2> out, std::span<const Vec2> x, int a, int b, double torque) {
  const Vec2 d = x[static_cast<std::size_t>(b)] - x[static_cast<std::size_t>(a)];
  const Vec2 f = torque / d.squaredNorm() * perp(d);
  out[static_cast<std::size_t>(b)] += f;
  out[static_cast<std::size_t>(a)] -= f;
}

// Sagittal torque (about the in-plane normal, sign of cross2) of a 3D torque.
double sagittal_torque(const Vec3& t) { return -t.y(); }

// Solves v = v_star + (dt/m) F(v) for the regularised friction law. The
// residual is strictly increasing in v and the root lies between 0 and v_star.
double implicit_slip(const env::SurfaceModel& s, double normal, double v_star, double h) {
  if (v_star == 0.0) return 0.0;
  double lo = std::min(0.0, v_star), hi = std::max(0.0, v_star);
  auto g = [&](double v) { return v - v_star - h * env::friction_force(s, normal, v); };
  double v = v_star;
  for (int it = 0; it < 100; ++it) {
    const double r = g(v);
    if (r == 0.0) return v;
    (r > 0.0 ? hi : lo) = v;
    const double th = std::tanh(v / env::kFrictionVelocityScale);
    const double slope =
        1.0 + h * s.mu(v) * normal * (1.0 - th * th) / env::kFrictionVelocityScale;
    double next = v - r / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - v) <= 1e-15 + 1e-13 * std::abs(v)) return next;
    v = next;
  }
  return v;
}

// Equilibrium on flat ground. With the shoes held in x this is the robot as
// assembled, arch thrust taken by the bench. Left free, the shoes carry no
// tangential load: regularized friction cannot hold a standing thrust without
// creeping, so that is the only pose that stays put. The top node's x then
// fixes the free translation.
std::vector<Vec2> standing_pose(const body::BodyMesh& mesh, std::span<const Vec2> weight,
                                double contact_stiffness, bool hold_shoes = false) {
  const auto loads = [&](std::span<const Vec2> x, std::span<Vec2> out) {
    for (std::size_t i = 0; i < mesh.size(); ++i) {
      out[i] += weight[i];
      out[i].y() += env::normal_force(-x[i].y(), 0.0, contact_stiffness, 0.0);
    }
  };
  std::vector<int> pinned{2 * mesh.top_node};
  if (hold_shoes) pinned = {2 * mesh.shoe_back, 2 * mesh.shoe_front};
  const body::StaticResult r =
      body::solve_static(mesh, mesh.rest_positions, loads, pinned, 1e-10, 200);
  require(r.residual < 1e-8, "standing pose did not converge", ErrorCode::instability);
  return r.state.positions;
}

}  // namespace

void validate(const SimConfig& c) {
  auto check = [](bool ok, const std::string& what) { require(ok, what, ErrorCode::config); };
  check(c.dt > 0.0, "dt must be positive");
  check(c.duration >= 0.0, "duration must be non-negative");
  check(c.output_rate_hz > 0.0 && c.output_rate_hz * c.dt <= 1.0,
        "output rate must be positive and at most 1/dt");
  check(fw::valid(c.gait), "gait configuration out of range");
  check(c.coil_offset >= -1.0 && c.coil_offset <= 1.0, "coil offset must lie in [-1, 1]");
  check(c.coil_travel >= 0.0 && c.coil_travel <= 0.02, "coil travel must lie in [0, 20] mm");
  check(c.k_turn >= 0.0, "k_turn must be non-negative");
  check(c.initial_jitter >= 0.0, "initial jitter must be non-negative");
  check(c.medium != Medium::water || c.water.has_value(), "water medium needs a water model");
  try {
    env::validate(c.surface);
    body::validate(c.material);
    fw::validate(c.thermal);
    if (c.water) env::validate(*c.water);
  } catch (const Error& e) {
    throw Error(ErrorCode::config, e.what());
  }
}

double steering_yaw_rate(double coil_offset, Mode mode, double freq_hz, double k_turn) {
  if (mode != Mode::walking) return 0.0;
  return -k_turn * std::clamp(coil_offset, -1.0, 1.0) * (freq_hz / 4.0);
}

TelemetryFrame snapshot_telemetry(const SimSnapshot& s) {
  TelemetryFrame f;
  f.t = s.time;
  f.x_cm = s.world.x * 100.0;
  f.y_cm = s.world.y * 100.0;
  f.heading_rad = s.world.heading;
  f.v_cm_s = s.com_velocity * 100.0;
  f.front_leg_x_cm = s.front_leg_x * 100.0;
  f.back_leg_x_cm = s.back_leg_x * 100.0;
  f.mode = s.firmware.mode;
  f.thermal_budget = s.firmware.thermal_budget;
  return f;
}

Simulator::Simulator(SimConfig config) : config_(std::move(config)) {
  validate(config_);
  firmware_.gait = config_.gait;
  firmware_.medium = config_.medium;
  firmware_.coil_offset = config_.coil_offset;
  if (config_.autostart) firmware_.mode = fw::running_mode(config_.medium);
  build();
  require(config_.dt <= dt_bound_,
          "dt " + std::to_string(config_.dt) + " s exceeds the stability bound " +
              std::to_string(dt_bound_) + " s",
          ErrorCode::config);
  settle();
  if (config_.initial_jitter > 0.0) {
    std::mt19937_64 rng(config_.seed);
    std::normal_distribution<double> jitter(0.0, config_.initial_jitter);
    for (auto& p : state_.positions) p += Vec2(jitter(rng), jitter(rng));
  }
}

void Simulator::build() {
  namespace mg = magnetics;
  const body::BodyMesh bare =
      body::build_body(config_.material, config_.n_nodes, {}, config_.layout);
  mesh_ = env::apply_payload(bare, config_.payload);
  const std::size_t n = mesh_.size();

  // Coils are mounted on the assembled robot (shoes held at the rest span), so
  // the calibration gap holds in that pose.
  const std::vector<Vec2> mount_pose =
      standing_pose(bare, body::gravity_loads(bare, 0.0), config_.surface.contact_stiffness, true);
  const double volume = mg::magnet_stack_volume();
  const ChassisFrame frame = chassis_frame(mesh_, mount_pose);
  auto mount = [&](mg::CoilLabel label, int magnet_node, const mg::CoilMeasurement& meas,
                   int anchor) {
    const double gap = mg::calibration_gap(meas.field, meas.force, mg::kMagnetRemanence, volume);
    const Vec2 p = mount_pose[static_cast<std::size_t>(magnet_node)] + gap * frame.w;
    CoilMount m;
    m.spec.center_offset = Vec3((p - frame.origin).dot(frame.u), 0.0,
                                (p - frame.origin).dot(frame.w));
    m.spec.axis = Vec3::UnitZ();
    m.spec.dipole_moment_max = mg::calibrate_coil_moment(meas.field, gap);
    m.spec.mass = meas.mass;
    m.spec.label = label;
    mg::validate(m.spec);
    m.anchor_node = anchor;
    return m;
  };
  coils_[0] = mount(mg::CoilLabel::front, mesh_.magnet_front, mg::kFrontCoilMeasurement,
                    mesh_.chassis_nodes.back());
  coils_[1] = mount(mg::CoilLabel::back, mesh_.magnet_back, mg::kBackCoilMeasurement,
                    mesh_.chassis_nodes.front());

  // The discs lie flat in the shell, so they are magnetised along the shell
  // normal. Polarity is opposite front and back: a positive duty sweeps both
  // leg tips backward.
  for (std::size_t k = 0; k < 2; ++k) {
    const int node = k == 0 ? mesh_.magnet_front : mesh_.magnet_back;
    const auto j = static_cast<std::size_t>(node);
    magnet_rest_dir_[k] = (mount_pose[j + 1] - mount_pose[j - 1]).normalized();
    const double sign = k == 0 ? 1.0 : -1.0;
    magnets_[k] = {sign * mg::kMagnetRemanence * lift(perp(magnet_rest_dir_[k])), volume, node,
                   k == 0 ? mg::CoilLabel::front : mg::CoilLabel::back};
  }

  if (config_.toggles.gravity) {
    gravity_ = body::gravity_loads(mesh_, config_.medium == Medium::ground ? config_.surface.slope_deg
                                                                            : 0.0);
  } else {
    gravity_.assign(n, Vec2::Zero());
  }
  inertia_x_ = mesh_.masses;
  inertia_x_[static_cast<std::size_t>(mesh_.shoe_back)] += mesh_.tow_mass;
  contact_damping_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    contact_damping_[i] = env::contact_damping_for(config_.surface, mesh_.masses[i]);
  }

  const bool ground_contact = config_.medium == Medium::ground && config_.toggles.contact;
  const double k_node = ground_contact ? config_.surface.contact_stiffness : 0.0;
  {
    // Rayleigh damping at the top mode shrinks the symplectic Euler limit.
    const double w = body::max_angular_frequency(mesh_, k_node);
    const double z = config_.toggles.damping
                         ? mesh_.rayleigh_alpha / (2.0 * w) + 0.5 * mesh_.rayleigh_beta * w
                         : 0.0;
    dt_bound_ = 2.0 * (std::sqrt(1.0 + z * z) - z) / w;
  }
  if (ground_contact) {
    // Damped contact oscillator under symplectic Euler: dt < 2 (sqrt(1+z^2) - z) / w.
    for (std::size_t i = 0; i < n; ++i) {
      const double w = std::sqrt(config_.surface.contact_stiffness / mesh_.masses[i]);
      const double z = contact_damping_[i] / (2.0 * mesh_.masses[i] * w);
      dt_bound_ = std::min(dt_bound_, 2.0 * (std::sqrt(1.0 + z * z) - z) / w);
    }
  }
  for (const auto& m : magnets_) {
    const double w = std::sqrt(config_.housing_stiffness /
                               mesh_.masses[static_cast<std::size_t>(m.node_index)]);
    dt_bound_ = std::min(dt_bound_, 2.0 / w);
  }
  force_buf_.assign(n, Vec2::Zero());
}

void Simulator::add_static_loads(std::span<const Vec2> x, std::span<Vec2> out) const {
  for (std::size_t i = 0; i < mesh_.size(); ++i) out[i] += gravity_[i];
  if (config_.medium == Medium::water) {
    env::add_buoyancy(mesh_, *config_.water, x, out);
  } else if (config_.toggles.contact) {
    for (std::size_t i = 0; i < mesh_.size(); ++i) {
      out[i].y() += env::normal_force(-x[i].y(), 0.0, config_.surface.contact_stiffness, 0.0);
    }
  }
}

void Simulator::settle() {
  state_ = body::rest_state(mesh_);
  if (config_.medium == Medium::ground && !config_.toggles.contact) {
    // Nothing to rest on; start from the unloaded shape.
    state_.time = static_cast<double>(steps_) * config_.dt;
    return;
  }
  std::vector<Vec2> x0 = mesh_.rest_positions;
  std::vector<int> pinned;
  if (config_.medium == Medium::water) {
    const auto& w = *config_.water;
    const double weight = mesh_.total_mass() * kGravity;
    const double frac = weight / (w.fluid_density * kGravity * w.buoyancy_volume);
    require(frac < 1.0, "foam block cannot float the robot", ErrorCode::config);
    const double target = w.waterline_height + 0.5 * w.block_height - frac * w.block_height;
    const double shift = target - x0[static_cast<std::size_t>(mesh_.top_node)].y();
    for (auto& p : x0) p.y() += shift;
    pinned.push_back(2 * mesh_.top_node);
  } else {
    // Stance first as on flat ground; a slope is then carried by the shoes.
    const std::vector<Vec2> weight =
        config_.toggles.gravity ? body::gravity_loads(mesh_, 0.0) : std::vector<Vec2>(mesh_.size(), Vec2::Zero());
    x0 = standing_pose(mesh_, weight, config_.surface.contact_stiffness);
    if (gravity_ == weight) {
      state_.positions = x0;
      state_.time = static_cast<double>(steps_) * config_.dt;
      return;
    }
    pinned.push_back(2 * mesh_.shoe_back);
    pinned.push_back(2 * mesh_.shoe_front);
  }

  const auto loads = [this](std::span<const Vec2> x, std::span<Vec2> out) {
    add_static_loads(x, out);
  };
  const body::StaticResult r = body::solve_static(mesh_, x0, loads, pinned, 1e-10, 200);
  require(r.residual < 1e-8, "static settling did not converge", ErrorCode::instability);
  state_.positions = r.state.positions;
  state_.time = static_cast<double>(steps_) * config_.dt;
}

void Simulator::add_magnetic_forces(const magnetics::DriveState& drive, std::span<const Vec2> x,
                                    std::span<Vec2> out) const {
  if (drive.duty_front == 0.0 && drive.duty_back == 0.0) return;
  const ChassisFrame frame = chassis_frame(mesh_, x);

  std::array<Vec3, 2> coil_pos, coil_axis;
  std::array<double, 2> duty{};
  for (std::size_t c = 0; c < 2; ++c) {
    const Vec3& off = coils_[c].spec.center_offset;
    const Vec2 p = frame.origin + off.x() * frame.u + off.z() * frame.w;
    const double lateral =
        c == 0 ? firmware_.coil_offset * config_.coil_travel : 0.0;  // front coil steers
    coil_pos[c] = Vec3(p.x(), lateral, p.y());
    coil_axis[c] = lift(frame.w);
    duty[c] = drive.duty(coils_[c].spec.label);
  }
  std::array<Vec3, 2> mag_pos, mag_br;
  for (std::size_t k = 0; k < 2; ++k) {
    const auto j = static_cast<std::size_t>(magnets_[k].node_index);
    const Vec2 dir = (x[j + 1] - x[j - 1]).normalized();
    const double cs = dir.dot(magnet_rest_dir_[k]);
    const double sn = cross2(magnet_rest_dir_[k], dir);
    const Vec3& br = magnets_[k].br;
    mag_br[k] = Vec3(cs * br.x() - sn * br.z(), br.y(), sn * br.x() + cs * br.z());
    mag_pos[k] = lift(x[j]);
  }

  // Four magnet-coil pairs, pair index 2*k + c.
  std::array<double, 4> rx, ry, rz, mx, my, mz, bx, by, bz;
  std::array<std::array<double, 4>, 9> g;
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t c = 0; c < 2; ++c) {
      const std::size_t p = 2 * k + c;
      const Vec3 r = mag_pos[k] - coil_pos[c];
      if (!(r.norm() >= magnetics::kSingularRadius)) {
        throw Error(ErrorCode::singular_evaluation, "magnet reached a coil centre");
      }
      const Vec3 m = duty[c] * coils_[c].spec.dipole_moment_max * coil_axis[c];
      rx[p] = r.x();
      ry[p] = r.y();
      rz[p] = r.z();
      mx[p] = m.x();
      my[p] = m.y();
      mz[p] = m.z();
    }
  }
  simd::DipoleBatch batch{rx, ry, rz, mx, my, mz, bx, by, bz, {}};
  for (int c = 0; c < 9; ++c) batch.g[c] = g[static_cast<std::size_t>(c)];
  simd::dipole_pairs(batch);

  const auto& chassis = mesh_.chassis_nodes;
  for (std::size_t k = 0; k < 2; ++k) {
    const int j = magnets_[k].node_index;
    const double scale = magnets_[k].volume / magnetics::kMu0;
    for (std::size_t c = 0; c < 2; ++c) {
      const std::size_t p = 2 * k + c;
      if (duty[c] == 0.0) continue;
      Vec3 force = Vec3::Zero();
      for (int i = 0; i < 3; ++i) {
        for (int jj = 0; jj < 3; ++jj) {
          force[jj] += mag_br[k][i] * g[static_cast<std::size_t>(3 * i + jj)][p];
        }
      }
      force *= scale;
      const Vec3 torque = scale * mag_br[k].cross(Vec3(bx[p], by[p], bz[p]));

      const Vec2 f2 = sagittal(force);
      out[static_cast<std::size_t>(j)] += f2;
      apply_couple(out, x, j - 1, j + 1, sagittal_torque(torque));

      // Reaction on the coil, carried by the chassis through its anchor.
      const Vec3 coil_torque = -torque - (mag_pos[k] - coil_pos[c]).cross(force);
      const int a = coils_[c].anchor_node;
      const Vec2 lever = sagittal(coil_pos[c]) - x[static_cast<std::size_t>(a)];
      out[static_cast<std::size_t>(a)] -= f2;
      apply_couple(out, x, chassis.front(), chassis.back(),
                   sagittal_torque(coil_torque) + cross2(lever, -f2));
    }
  }
}

void Simulator::add_housing_forces(std::span<const Vec2> x, std::span<Vec2> out) const {
  const ChassisFrame frame = chassis_frame(mesh_, x);
  for (std::size_t c = 0; c < 2; ++c) {
    const double r0 = config_.housing_radius;
    const Vec3& off = coils_[c].spec.center_offset;
    const Vec2 p = frame.origin + off.x() * frame.u + off.z() * frame.w;
    const double lateral = c == 0 ? firmware_.coil_offset * config_.coil_travel : 0.0;
    for (const auto& m : magnets_) {
      const auto j = static_cast<std::size_t>(m.node_index);
      const Vec2 d = x[j] - p;
      const double r = std::hypot(d.norm(), lateral);
      if (r >= r0 || d.norm() < 1e-12) continue;
      // Only the sagittal part pushes; the lateral offset just shortens the reach.
      const Vec2 f = config_.housing_stiffness * (r0 - r) * d.normalized();
      out[j] += f;
      out[static_cast<std::size_t>(coils_[c].anchor_node)] -= f;
      const Vec2 lever = p - x[static_cast<std::size_t>(coils_[c].anchor_node)];
      apply_couple(out, x, mesh_.chassis_nodes.front(), mesh_.chassis_nodes.back(),
                   cross2(lever, -f));
    }
  }
}

std::vector<Vec2> Simulator::total_forces(const magnetics::DriveState& drive) const {
  const std::size_t n = mesh_.size();
  std::vector<Vec2> f(n, Vec2::Zero());
  const auto& x = state_.positions;
  const auto& v = state_.velocities;
  body::add_conservative_forces(mesh_, x, f);
  if (config_.toggles.damping) body::add_damping_forces(mesh_, x, v, f);
  for (std::size_t i = 0; i < n; ++i) f[i] += gravity_[i];
  add_magnetic_forces(drive, x, f);
  add_housing_forces(x, f);
  if (config_.medium == Medium::water) {
    env::add_buoyancy(mesh_, *config_.water, x, f);
    env::add_drag(mesh_, *config_.water, x, v, f);
  } else if (config_.toggles.contact) {
    const auto c = env::contact_forces(state_, mesh_, config_.surface);
    for (std::size_t i = 0; i < n; ++i) f[i] += c[i];
  }
  return f;
}

void Simulator::step() {
  const double dt = config_.dt;
  const std::size_t n = mesh_.size();
  auto [fw_next, drive] = fw::firmware_tick(firmware_, dt, config_.thermal);
  const Mode mode_during = firmware_.mode;
  firmware_ = fw_next;
  drive_ = drive;

  auto& f = force_buf_;
  std::fill(f.begin(), f.end(), Vec2::Zero());
  auto& x = state_.positions;
  auto& v = state_.velocities;
  body::add_conservative_forces(mesh_, x, f);
  if (config_.toggles.damping) body::add_damping_forces(mesh_, x, v, f);
  for (std::size_t i = 0; i < n; ++i) f[i] += gravity_[i];
  add_magnetic_forces(drive, x, f);
  add_housing_forces(x, f);

  const bool ground = config_.medium == Medium::ground && config_.toggles.contact;
  std::array<double, 2> shoe_normal{0.0, 0.0};
  const std::array<int, 2> shoes{mesh_.shoe_back, mesh_.shoe_front};
  if (config_.medium == Medium::water) {
    env::add_buoyancy(mesh_, *config_.water, x, f);
    env::add_drag(mesh_, *config_.water, x, v, f);
  } else if (ground) {
    const double k = config_.surface.contact_stiffness;
    for (std::size_t i = 0; i < n; ++i) {
      const double nf = env::normal_force(-x[i].y(), -v[i].y(), k, contact_damping_[i]);
      f[i].y() += nf;
      if (static_cast<int>(i) == shoes[0]) shoe_normal[0] = nf;
      if (static_cast<int>(i) == shoes[1]) shoe_normal[1] = nf;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    v[i].x() += dt * f[i].x() / inertia_x_[i];
    v[i].y() += dt * f[i].y() / mesh_.masses[i];
  }
  // Friction is stiff near zero slip; integrate it implicitly per shoe.
  for (std::size_t s = 0; s < 2; ++s) {
    if (shoe_normal[s] <= 0.0) continue;
    const auto i = static_cast<std::size_t>(shoes[s]);
    v[i].x() = implicit_slip(config_.surface, shoe_normal[s], v[i].x(), dt / inertia_x_[i]);
  }
  double m_tot = 0.0, p_x = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] += dt * v[i];
    if (!(v[i].norm() < kInstabilitySpeed)) {
      throw InstabilityError(state_.time + dt,
                             "node " + std::to_string(i) + " exceeded " +
                                 std::to_string(kInstabilitySpeed) + " m/s at t = " +
                                 std::to_string(state_.time + dt) + " s");
    }
    m_tot += mesh_.masses[i];
    p_x += mesh_.masses[i] * v[i].x();
  }

  const double speed = p_x / m_tot;
  const double yaw =
      steering_yaw_rate(firmware_.coil_offset, mode_during, firmware_.gait.freq_hz, config_.k_turn);
  pose_.x += dt * speed * std::cos(pose_.heading);
  pose_.y += dt * speed * std::sin(pose_.heading);
  pose_.heading = wrap_angle(pose_.heading + dt * yaw);
  ++steps_;
  state_.time = static_cast<double>(steps_) * dt;
}

void Simulator::advance(double seconds) {
  const auto n = static_cast<std::int64_t>(std::llround(seconds / config_.dt));
  for (std::int64_t k = 0; k < n; ++k) step();
}

SimSnapshot Simulator::snapshot() const {
  SimSnapshot s;
  s.time = state_.time;
  s.world = pose_;
  double m_tot = 0.0, p_x = 0.0;
  for (std::size_t i = 0; i < mesh_.size(); ++i) {
    m_tot += mesh_.masses[i];
    p_x += mesh_.masses[i] * state_.velocities[i].x();
  }
  s.com_velocity = p_x / m_tot;
  s.front_leg_x = state_.positions[static_cast<std::size_t>(mesh_.shoe_front)].x();
  s.back_leg_x = state_.positions[static_cast<std::size_t>(mesh_.shoe_back)].x();
  s.body = state_;
  s.firmware = firmware_;
  return s;
}

void Simulator::set_body_state(const body::BodyState& state) {
  body::check_state(mesh_, state);
  state_.positions = state.positions;
  state_.velocities = state.velocities;
}

Response Simulator::handle(const Command& command) {
  const auto* env_cmd = std::get_if<cmd::SetEnv>(&command.body);
  env::SurfaceModel surface;
  if (env_cmd != nullptr) {
    try {
      surface = env::surface_preset(env_cmd->surface, config_.presets);
    } catch (const Error&) {
      return Err{command.cmd_id, ErrCode::bad_param};
    }
  }
  auto [next, response] = fw::handle_command(firmware_, command);
  firmware_ = next;
  if (env_cmd == nullptr || !std::holds_alternative<Ack>(response)) return response;

  surface.slope_deg = env_cmd->medium == Medium::ground ? env_cmd->slope_deg : 0.0;
  surface.contact_stiffness = config_.surface.contact_stiffness;
  surface.contact_damping = config_.surface.contact_damping;
  config_.surface = surface;
  config_.medium = env_cmd->medium;
  if (config_.medium == Medium::water && !config_.water) config_.water = env::WaterModel{};
  config_.payload = env::payload_for(env_cmd->payload_g, config_.medium == Medium::water);
  build();
  settle();
  return response;
}

void run(const SimConfig& config, const SnapshotSink& sink) {
  Simulator sim(config);
  if (config.duration <= 0.0) return;
  const auto steps = static_cast<std::int64_t>(std::llround(config.duration / config.dt));
  const auto every =
      std::max<std::int64_t>(1, std::llround(1.0 / (config.output_rate_hz * config.dt)));
  sink(sim.snapshot());
  for (std::int64_t k = 1; k <= steps; ++k) {
    sim.step();
    if (k % every == 0) sink(sim.snapshot());
  }
}

std::vector<SimSnapshot> run(const SimConfig& config) {
  std::vector<SimSnapshot> out;
  run(config, [&](const SimSnapshot& s) { out.push_back(s); });
  return out;
}

}  // namespace inchworm::sim
