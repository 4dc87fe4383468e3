#include "inchworm/firmware.hpp"

#include <algorithm>
#include <cmath>

namespace inchworm::fw {

namespace {

// Budgets this close to a limit count as reaching it; long runs accumulate
// about 1e-10 of rounding.
constexpr double kBudgetEps = 1e-9;

}  // namespace

bool valid(const GaitConfig& g) {
  return g.freq_hz >= 0.1 && g.freq_hz <= 20.0 && g.duty > 0.0 && g.duty <= 1.0 &&
         g.amplitude > 0.0 && g.amplitude <= 1.0;
}

void validate(const ThermalBudgetParams& p) {
  require(p.full_duty_runtime > 0.0, "full-duty runtime must be positive");
  require(p.cooldown_time > 0.0, "cooldown time must be positive");
  require(p.recovery_threshold > 0.0 && p.recovery_threshold <= 1.0,
          "recovery threshold must lie in (0, 1]");
}

magnetics::DriveState gait_waveform(const GaitConfig& g, Mode mode, double t) {
  if (mode != Mode::walking && mode != Mode::swimming) return {};
  const double cycles = t * g.freq_hz + 1e-9;
  const bool on = cycles - std::floor(cycles) < g.duty;
  const double a = g.amplitude;
  if (g.phase == PhaseMode::out_of_phase) {
    const double s = on ? a : -a;
    return magnetics::DriveState::clamped(s, -s);
  }
  const double s = on ? a : 0.0;
  return magnetics::DriveState::clamped(s, s);
}

FirmwareState thermal_update(FirmwareState s, const magnetics::DriveState& drive, double dt,
                             const ThermalBudgetParams& p) {
  require(dt > 0.0, "thermal update needs dt > 0");
  if (s.mode == Mode::cooldown) {
    s.thermal_budget = std::min(1.0, s.thermal_budget + dt / p.cooldown_time);
    if (s.thermal_budget >= p.recovery_threshold - kBudgetEps) {
      s.thermal_budget = std::max(s.thermal_budget, p.recovery_threshold);
      s.mode = Mode::idle;
    }
    return s;
  }
  const double load = 0.5 * (drive.duty_front * drive.duty_front +
                             drive.duty_back * drive.duty_back);
  if (load == 0.0) return s;
  s.thermal_budget -= load * dt / p.full_duty_runtime;
  if (s.thermal_budget <= kBudgetEps) {
    s.thermal_budget = 0.0;
    s.mode = Mode::cooldown;
  }
  return s;
}

Mode running_mode(Medium m) { return m == Medium::water ? Mode::swimming : Mode::walking; }

std::pair<FirmwareState, Response> handle_command(FirmwareState s, const Command& c) {
  const auto ack = [&](const FirmwareState& next) {
    return std::pair<FirmwareState, Response>{next, Ack{c.cmd_id, next.mode}};
  };
  const auto err = [&](ErrCode code) {
    return std::pair<FirmwareState, Response>{s, Err{c.cmd_id, code}};
  };

  if (const auto* g = std::get_if<cmd::SetGait>(&c.body)) {
    const GaitConfig gait{g->freq_hz, g->duty, g->phase, g->amplitude};
    if (!valid(gait)) return err(ErrCode::bad_param);
    FirmwareState next = s;
    next.gait = gait;
    return ack(next);
  }
  if (const auto* o = std::get_if<cmd::SetCoilOffset>(&c.body)) {
    if (!std::isfinite(o->offset)) return err(ErrCode::bad_param);
    FirmwareState next = s;
    next.coil_offset = std::clamp(o->offset, -1.0, 1.0);
    return ack(next);
  }
  if (const auto* e = std::get_if<cmd::SetEnv>(&c.body)) {
    if (!std::isfinite(e->slope_deg) || std::abs(e->slope_deg) > 30.0 ||
        !std::isfinite(e->payload_g) || e->payload_g < 0.0 || e->payload_g > 200.0) {
      return err(ErrCode::bad_param);
    }
    FirmwareState next = s;
    next.medium = e->medium;
    if (next.mode == Mode::walking || next.mode == Mode::swimming) {
      next.mode = running_mode(next.medium);
    }
    return ack(next);
  }
  if (std::holds_alternative<cmd::Start>(c.body)) {
    if (s.mode == Mode::cooldown) return err(ErrCode::cooldown_active);
    FirmwareState next = s;
    const Mode target = running_mode(s.medium);
    if (next.mode != target) {
      next.mode = target;
      next.gait_time = 0.0;
    }
    return ack(next);
  }
  if (std::holds_alternative<cmd::Stop>(c.body)) {
    FirmwareState next = s;
    if (next.mode != Mode::cooldown) next.mode = Mode::idle;
    return ack(next);
  }
  // reset
  FirmwareState next;
  next.uptime = s.uptime;
  next.medium = s.medium;  // the robot stays where it is
  return ack(next);
}

std::pair<FirmwareState, magnetics::DriveState> firmware_tick(FirmwareState s, double dt,
                                                              const ThermalBudgetParams& p) {
  require(dt >= 1e-5 && dt <= 1e-2, "firmware tick must lie in [1e-5, 1e-2] s");
  magnetics::DriveState drive = gait_waveform(s.gait, s.mode, s.gait_time);
  s.uptime += dt;
  if (s.mode == Mode::walking || s.mode == Mode::swimming) s.gait_time += dt;
  s = thermal_update(s, drive, dt, p);
  if (s.mode == Mode::cooldown || s.mode == Mode::idle) drive = {};
  return {s, drive};
}

}  // namespace inchworm::fw
