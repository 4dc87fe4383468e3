// Records exchanged with the robot controller: commands, acknowledgements,
// errors and telemetry.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace inchworm {

enum class PhaseMode { out_of_phase, in_phase };
enum class Medium { ground, water };
enum class Mode { idle, walking, swimming, cooldown };

std::string_view to_string(PhaseMode p);
std::string_view to_string(Medium m);
std::string_view to_string(Mode m);
std::optional<PhaseMode> parse_phase(std::string_view s);
std::optional<Medium> parse_medium(std::string_view s);
std::optional<Mode> parse_mode(std::string_view s);

namespace cmd {

struct SetGait {
  double freq_hz = 4.0;
  double duty = 0.5;
  PhaseMode phase = PhaseMode::out_of_phase;
  double amplitude = 1.0;
  bool operator==(const SetGait&) const = default;
};

struct SetCoilOffset {
  double offset = 0.0;
  bool operator==(const SetCoilOffset&) const = default;
};

struct SetEnv {
  std::string surface = "plastic_table";
  double slope_deg = 0.0;
  double payload_g = 0.0;
  Medium medium = Medium::ground;
  bool operator==(const SetEnv&) const = default;
};

struct Start {
  bool operator==(const Start&) const = default;
};
struct Stop {
  bool operator==(const Stop&) const = default;
};
struct Reset {
  bool operator==(const Reset&) const = default;
};

}  // namespace cmd

struct Command {
  std::int64_t cmd_id = 0;
  std::variant<cmd::SetGait, cmd::SetCoilOffset, cmd::SetEnv, cmd::Start, cmd::Stop,
               cmd::Reset>
      body;
  bool operator==(const Command&) const = default;
};

std::string_view type_name(const Command& c);

enum class ErrCode { unknown_cmd, bad_param, frame_too_large, cooldown_active };

std::string_view to_string(ErrCode e);

struct Ack {
  std::int64_t cmd_id = 0;
  Mode state = Mode::idle;
  bool operator==(const Ack&) const = default;
};

struct Err {
  std::optional<std::int64_t> cmd_id;  // null when the line carried no usable id
  ErrCode code = ErrCode::bad_param;
  bool operator==(const Err&) const = default;
};

using Response = std::variant<Ack, Err>;

struct TelemetryFrame {
  double t = 0.0;  // s
  double x_cm = 0.0;
  double y_cm = 0.0;
  double heading_rad = 0.0;
  double v_cm_s = 0.0;
  double front_leg_x_cm = 0.0;
  double back_leg_x_cm = 0.0;
  Mode mode = Mode::idle;
  double thermal_budget = 1.0;
  bool operator==(const TelemetryFrame&) const = default;
};

}  // namespace inchworm
