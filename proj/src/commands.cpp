#include "inchworm/commands.hpp"

#include "inchworm/common.hpp"

namespace inchworm {

std::string_view to_string(PhaseMode p) {
  return p == PhaseMode::in_phase ? "in_phase" : "out_of_phase";
}

std::string_view to_string(Medium m) { return m == Medium::water ? "water" : "ground"; }

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::idle: return "idle";
    case Mode::walking: return "walking";
    case Mode::swimming: return "swimming";
    case Mode::cooldown: return "cooldown";
  }
  return "idle";
}

std::optional<PhaseMode> parse_phase(std::string_view s) {
  if (s == "out_of_phase") return PhaseMode::out_of_phase;
  if (s == "in_phase") return PhaseMode::in_phase;
  return std::nullopt;
}

std::optional<Medium> parse_medium(std::string_view s) {
  if (s == "ground") return Medium::ground;
  if (s == "water") return Medium::water;
  return std::nullopt;
}

std::optional<Mode> parse_mode(std::string_view s) {
  for (Mode m : {Mode::idle, Mode::walking, Mode::swimming, Mode::cooldown}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

std::string_view type_name(const Command& c) {
  static constexpr std::string_view names[] = {"set_gait", "set_coil_offset", "set_env",
                                               "start",    "stop",            "reset"};
  return names[c.body.index()];
}

std::string_view to_string(ErrCode e) {
  switch (e) {
    case ErrCode::unknown_cmd: return "unknown_cmd";
    case ErrCode::bad_param: return "bad_param";
    case ErrCode::frame_too_large: return "frame_too_large";
    case ErrCode::cooldown_active: return "cooldown_active";
  }
  return "bad_param";
}

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::singular_evaluation: return "singular_evaluation";
    case ErrorCode::unknown_preset: return "unknown_preset";
    case ErrorCode::instability: return "instability";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
    case ErrorCode::calibration: return "calibration";
  }
  return "unknown";
}

}  // namespace inchworm
