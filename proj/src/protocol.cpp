#include "inchworm/protocol.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "json.hpp"

namespace inchworm::proto {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view strip_eol(std::string_view s) {
  if (!s.empty() && s.back() == '\n') s.remove_suffix(1);
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

std::optional<std::int64_t> integer_id(const json& j) {
  const auto it = j.find("cmd_id");
  if (it == j.end() || !it->is_number_integer()) return std::nullopt;
  if (it->is_number_unsigned() &&
      it->get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
    return std::nullopt;
  }
  return it->get<std::int64_t>();
}

// Field readers; nullopt means missing or ill-typed.
std::optional<double> number(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) return std::nullopt;
  const double v = it->get<double>();
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<std::string> text(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

std::string format_number(double v) {
  if (v == 0.0 || !std::isfinite(v)) return "0";
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                               std::chars_format::general, 6);
  return std::string(buf.data(), r.ptr);
}

std::string encode_command(const Command& c) {
  ojson j;
  j["type"] = std::string(type_name(c));
  j["cmd_id"] = c.cmd_id;
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, cmd::SetGait>) {
          j["freq_hz"] = b.freq_hz;
          j["duty"] = b.duty;
          j["phase"] = std::string(to_string(b.phase));
          j["amplitude"] = b.amplitude;
        } else if constexpr (std::is_same_v<T, cmd::SetCoilOffset>) {
          j["offset"] = b.offset;
        } else if constexpr (std::is_same_v<T, cmd::SetEnv>) {
          j["surface"] = b.surface;
          j["slope_deg"] = b.slope_deg;
          j["payload_g"] = b.payload_g;
          j["medium"] = std::string(to_string(b.medium));
        }
      },
      c.body);
  return j.dump() + "\n";
}

std::string encode_response(const Response& r) {
  ojson j;
  if (const auto* a = std::get_if<Ack>(&r)) {
    j["type"] = "ack";
    j["cmd_id"] = a->cmd_id;
    j["state"] = std::string(to_string(a->state));
  } else {
    const auto& e = std::get<Err>(r);
    j["type"] = "err";
    j["cmd_id"] = e.cmd_id ? ojson(*e.cmd_id) : ojson(nullptr);
    j["code"] = std::string(to_string(e.code));
  }
  return j.dump() + "\n";
}

std::string encode_telemetry(const TelemetryFrame& f) {
  std::string s = "{\"type\":\"telemetry\"";
  const auto field = [&](const char* name, double v) {
    s += ",\"";
    s += name;
    s += "\":";
    s += format_number(v);
  };
  field("t", f.t);
  field("x_cm", f.x_cm);
  field("y_cm", f.y_cm);
  field("heading_rad", f.heading_rad);
  field("v_cm_s", f.v_cm_s);
  field("front_leg_x_cm", f.front_leg_x_cm);
  field("back_leg_x_cm", f.back_leg_x_cm);
  s += ",\"mode\":\"";
  s += to_string(f.mode);
  s += "\"";
  field("thermal_budget", f.thermal_budget);
  s += "}\n";
  return s;
}

Decoded decode_command(std::string_view line) {
  if (line.size() > kMaxFrameBytes) return Err{std::nullopt, ErrCode::frame_too_large};
  line = strip_eol(line);
  const json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return Err{std::nullopt, ErrCode::bad_param};

  const std::optional<std::int64_t> id = integer_id(j);
  const auto bad = [&](ErrCode code) { return Err{id, code}; };
  const auto type = text(j, "type");
  if (!type) return bad(ErrCode::bad_param);

  Command c;
  if (*type == "set_gait") {
    const auto f = number(j, "freq_hz"), d = number(j, "duty"), a = number(j, "amplitude");
    const auto p = text(j, "phase");
    const auto phase = p ? parse_phase(*p) : std::nullopt;
    if (!f || !d || !a || !phase) return bad(ErrCode::bad_param);
    c.body = cmd::SetGait{*f, *d, *phase, *a};
  } else if (*type == "set_coil_offset") {
    const auto o = number(j, "offset");
    if (!o) return bad(ErrCode::bad_param);
    c.body = cmd::SetCoilOffset{*o};
  } else if (*type == "set_env") {
    const auto surface = text(j, "surface");
    const auto slope = number(j, "slope_deg"), payload = number(j, "payload_g");
    const auto m = text(j, "medium");
    const auto medium = m ? parse_medium(*m) : std::nullopt;
    if (!surface || !slope || !payload || !medium) return bad(ErrCode::bad_param);
    c.body = cmd::SetEnv{*surface, *slope, *payload, *medium};
  } else if (*type == "start") {
    c.body = cmd::Start{};
  } else if (*type == "stop") {
    c.body = cmd::Stop{};
  } else if (*type == "reset") {
    c.body = cmd::Reset{};
  } else {
    return bad(ErrCode::unknown_cmd);
  }
  if (!id) return bad(ErrCode::bad_param);
  c.cmd_id = *id;
  return c;
}

std::optional<Response> decode_response(std::string_view line) {
  line = strip_eol(line);
  const json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  const auto type = text(j, "type");
  if (type == "ack") {
    const auto id = integer_id(j);
    const auto st = text(j, "state");
    const auto mode = st ? parse_mode(*st) : std::nullopt;
    if (!id || !mode) return std::nullopt;
    return Ack{*id, *mode};
  }
  if (type == "err") {
    const auto code = text(j, "code");
    if (!code) return std::nullopt;
    for (ErrCode e : {ErrCode::unknown_cmd, ErrCode::bad_param, ErrCode::frame_too_large,
                      ErrCode::cooldown_active}) {
      if (to_string(e) == *code) return Err{integer_id(j), e};
    }
  }
  return std::nullopt;
}

std::optional<TelemetryFrame> decode_telemetry(std::string_view line) {
  line = strip_eol(line);
  const json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object() || text(j, "type") != "telemetry") return std::nullopt;
  TelemetryFrame f;
  const std::array<std::pair<const char*, double*>, 8> fields{{{"t", &f.t},
                                                              {"x_cm", &f.x_cm},
                                                              {"y_cm", &f.y_cm},
                                                              {"heading_rad", &f.heading_rad},
                                                              {"v_cm_s", &f.v_cm_s},
                                                              {"front_leg_x_cm", &f.front_leg_x_cm},
                                                              {"back_leg_x_cm", &f.back_leg_x_cm},
                                                              {"thermal_budget", &f.thermal_budget}}};
  for (const auto& [key, dst] : fields) {
    const auto v = number(j, key);
    if (!v) return std::nullopt;
    *dst = *v;
  }
  const auto m = text(j, "mode");
  const auto mode = m ? parse_mode(*m) : std::nullopt;
  if (!mode) return std::nullopt;
  f.mode = *mode;
  return f;
}

std::optional<Decoded> SessionDecoder::accept(std::string_view line) {
  if (line.size() <= kMaxFrameBytes && blank(line)) return std::nullopt;
  Decoded d = decode_command(line);
  if (auto* c = std::get_if<Command>(&d)) {
    if (last_id_ && c->cmd_id <= *last_id_) return Decoded{Err{c->cmd_id, ErrCode::bad_param}};
    last_id_ = c->cmd_id;
  }
  return d;
}

}  // namespace inchworm::proto
