// Emulation of the onboard controller: gait waveform, command handling, mode
// machine and the coil thermal budget.
#pragma once

#include <utility>

#include "inchworm/commands.hpp"
#include "inchworm/magnetics.hpp"

namespace inchworm::fw {

struct GaitConfig {
  double freq_hz = 4.0;
  double duty = 0.5;
  PhaseMode phase = PhaseMode::out_of_phase;
  double amplitude = 1.0;
  bool operator==(const GaitConfig&) const = default;
};

/// Returns false when any field is out of range (0.1..20 Hz, duty and
/// amplitude in (0, 1]).
bool valid(const GaitConfig& gait);

struct ThermalBudgetParams {
  double full_duty_runtime = 90.0;  // s
  double cooldown_time = 150.0;     // s
  double recovery_threshold = 1.0;
};

void validate(const ThermalBudgetParams& params);

struct FirmwareState {
  Mode mode = Mode::idle;
  GaitConfig gait;
  Medium medium = Medium::ground;
  double coil_offset = 0.0;     // [-1, 1]
  double thermal_budget = 1.0;  // [0, 1]
  double uptime = 0.0;          // s
  double gait_time = 0.0;       // s since the last start
  bool operator==(const FirmwareState&) const = default;
};

/// Square-wave drive. Out of phase: front = A sq(t), back = -A sq(t) where sq
/// is +1 for the first `duty` of each period and -1 after. In phase: both
/// coils +A during the on-fraction, 0 otherwise. Idle/Cooldown give zero.
magnetics::DriveState gait_waveform(const GaitConfig& gait, Mode mode, double t);

FirmwareState thermal_update(FirmwareState state, const magnetics::DriveState& drive, double dt,
                             const ThermalBudgetParams& params = {});

/// The running mode `start` enters for a medium.
Mode running_mode(Medium medium);

/// Applies a decoded command. set_env only records the medium here; surface,
/// slope and payload are applied by the simulator, which validates them.
std::pair<FirmwareState, Response> handle_command(FirmwareState state, const Command& cmd);

/// One timer tick: advances time, produces the drive for the current mode and
/// charges it to the thermal budget. A trip inside the tick returns (0, 0).
std::pair<FirmwareState, magnetics::DriveState> firmware_tick(
    FirmwareState state, double dt, const ThermalBudgetParams& params = {});

}  // namespace inchworm::fw
