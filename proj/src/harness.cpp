#include "inchworm/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace inchworm::harness {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

[[noreturn]] void config_error(const std::string& origin, const std::string& what) {
  throw Error(ErrorCode::config, origin + ": " + what);
}

// Byte offset to "line L, column C" (1-based).
std::string where(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

json parse_json(std::string_view text, const std::string& origin) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // e.byte points one past the offending character
    config_error(origin, "syntax error at " + where(text, e.byte == 0 ? 0 : e.byte - 1));
  }
}

// Typed access to one JSON object with the field path kept for messages.
class Fields {
 public:
  Fields(const json& j, std::string path, const std::string& origin)
      : j_(j), path_(std::move(path)), origin_(origin) {
    if (!j_.is_object()) fail("", "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  double number(const char* key) const {
    const json& v = at(key);
    if (!v.is_number()) fail(key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(key, "expected a finite number");
    return d;
  }
  double number(const char* key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }
  std::optional<double> maybe_number(const char* key) const {
    if (!has(key)) return std::nullopt;
    return number(key);
  }
  std::int64_t integer(const char* key) const {
    const json& v = at(key);
    if (!v.is_number_integer()) fail(key, "expected an integer");
    return v.get<std::int64_t>();
  }
  std::string text(const char* key) const {
    const json& v = at(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }
  std::string text(const char* key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
  }
  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_boolean()) fail(key, "expected true or false");
    return v.get<bool>();
  }
  Fields object(const char* key) const { return Fields(at(key), field(key), origin_); }
  const json& array(const char* key) const {
    const json& v = at(key);
    if (!v.is_array()) fail(key, "expected an array");
    return v;
  }
  const json& raw(const char* key) const { return at(key); }

  void only(std::initializer_list<const char*> known) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      const bool ok = std::any_of(known.begin(), known.end(),
                                  [&](const char* k) { return it.key() == k; });
      if (!ok) fail(it.key(), "unknown field");
    }
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const std::string f = key.empty() ? path_ : field(key);
    config_error(origin_, "field '" + (f.empty() ? std::string("<root>") : f) + "': " + what);
  }
  const std::string& origin() const { return origin_; }

 private:
  const json& at(const char* key) const {
    const auto it = j_.find(key);
    if (it == j_.end()) fail(key, "missing");
    return *it;
  }

  const json& j_;
  std::string path_;
  const std::string& origin_;
};

void check_schema(const Fields& f) {
  if (f.integer("schema_version") != kSchemaVersion) {
    f.fail("schema_version", "unsupported version (expected " +
                                 std::to_string(kSchemaVersion) + ")");
  }
}

bool is_preset(std::string_view name) {
  const auto names = env::preset_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

double parse_double(std::string_view s, const std::string& origin, std::size_t line) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    config_error(origin, "line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------- helpers

std::string format_exact(double v) {
  if (v == 0.0) return "0";
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, path.string() + ": cannot open for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::io, path.string() + ": write failed");
}

// ---------------------------------------------------------------- parameters

namespace {

enum class ParamKind { mu_forward, mu_backward, scalar };

std::optional<std::pair<std::string, ParamKind>> surface_param(std::string_view name) {
  const auto dot = name.find('.');
  if (dot == std::string_view::npos) return std::nullopt;
  const std::string_view preset = name.substr(0, dot), field = name.substr(dot + 1);
  if (!is_preset(preset)) return std::nullopt;
  if (field == "mu_forward") return std::pair{std::string(preset), ParamKind::mu_forward};
  if (field == "mu_backward") return std::pair{std::string(preset), ParamKind::mu_backward};
  return std::nullopt;
}

constexpr std::array<std::string_view, 5> kScalarParams{
    "damping_ratio", "k_turn", "drag_coefficient", "coil_travel_mm", "bending_stiffness_scale"};

}  // namespace

void check_param_names(const ParamSet& params) {
  for (const auto& [name, value] : params) {
    const bool scalar =
        std::find(kScalarParams.begin(), kScalarParams.end(), name) != kScalarParams.end();
    if (!scalar && !surface_param(name)) {
      throw Error(ErrorCode::config, "unknown parameter '" + name + "'");
    }
    if (!std::isfinite(value)) {
      throw Error(ErrorCode::config, "parameter '" + name + "' is not finite");
    }
  }
}

void apply_params(const ParamSet& params, sim::SimConfig& config) {
  check_param_names(params);
  for (const auto& [name, value] : params) {
    if (const auto sp = surface_param(name)) {
      auto it = config.presets.find(sp->first);
      if (it == config.presets.end()) {
        const env::SurfaceModel base = env::surface_preset(sp->first);
        it = config.presets.emplace(sp->first, env::FrictionOverride{base.mu_forward,
                                                                     base.mu_backward})
                 .first;
      }
      (sp->second == ParamKind::mu_forward ? it->second.mu_forward : it->second.mu_backward) =
          value;
    } else if (name == "damping_ratio") {
      config.material.damping_ratio = value;
    } else if (name == "k_turn") {
      config.k_turn = value;
    } else if (name == "drag_coefficient") {
      if (!config.water) config.water = env::WaterModel{};
      config.water->drag_coefficient = value;
    } else if (name == "coil_travel_mm") {
      config.coil_travel = value * 1e-3;
    } else if (name == "bending_stiffness_scale") {
      config.material.bending_stiffness_scale = value;
    }
  }
  if (is_preset(config.surface.name)) {
    const env::SurfaceModel p = env::surface_preset(config.surface.name, config.presets);
    config.surface.mu_forward = p.mu_forward;
    config.surface.mu_backward = p.mu_backward;
  }
}

ParamSet load_params(const fs::path& path) {
  const std::string origin = path.string();
  const json j = parse_json(read_file(path), origin);
  const Fields f(j, "", origin);
  f.only({"schema_version", "params", "note"});
  check_schema(f);
  const json& p = f.raw("params");
  if (!p.is_object()) f.fail("params", "expected an object");
  ParamSet out;
  for (auto it = p.begin(); it != p.end(); ++it) {
    if (!it->is_number()) f.fail("params." + it.key(), "expected a number");
    out[it.key()] = it->get<double>();
  }
  try {
    check_param_names(out);
  } catch (const Error& e) {
    config_error(origin, e.what());
  }
  return out;
}

std::string params_json(const ParamSet& params) {
  ojson j;
  j["schema_version"] = kSchemaVersion;
  ojson p = ojson::object();
  for (const auto& [name, value] : params) p[name] = value;
  j["params"] = p;
  return j.dump(2) + "\n";
}

void save_params(const ParamSet& params, const fs::path& path) {
  write_file(path, params_json(params));
}

// ------------------------------------------------------------------ scenarios

std::string_view to_string(Observable o) {
  return o == Observable::yaw_rate_rad_s ? "yaw_rate_rad_s" : "mean_speed_cm_s";
}

std::optional<Observable> parse_observable(std::string_view s) {
  if (s == "mean_speed_cm_s") return Observable::mean_speed_cm_s;
  if (s == "yaw_rate_rad_s") return Observable::yaw_rate_rad_s;
  return std::nullopt;
}

Scenario parse_scenario(std::string_view text, const std::string& origin,
                        const fs::path& base_dir) {
  const json j = parse_json(text, origin);
  const Fields f(j, "", origin);
  f.only({"schema_version", "name", "description", "params", "duration_s", "dt_s",
          "output_rate_hz", "medium", "surface", "slope_deg", "payload_g", "tow_drag_area_m2",
          "gait", "coil_offset", "seed", "initial_jitter_m", "target", "report"});
  check_schema(f);

  Scenario s;
  s.name = f.text("name");
  if (s.name.empty()) f.fail("name", "must not be empty");
  sim::SimConfig& c = s.config;
  c.duration = f.number("duration_s", c.duration);
  c.dt = f.number("dt_s", c.dt);
  c.output_rate_hz = f.number("output_rate_hz", c.output_rate_hz);
  if (f.has("medium")) {
    const auto m = parse_medium(f.text("medium"));
    if (!m) f.fail("medium", "expected \"ground\" or \"water\"");
    c.medium = *m;
  }

  if (f.has("surface")) {
    const json& sj = f.raw("surface");
    if (sj.is_string()) {
      s.surface_preset = sj.get<std::string>();
      if (!is_preset(s.surface_preset)) {
        f.fail("surface", "unknown preset '" + s.surface_preset + "'");
      }
      c.surface = env::surface_preset(s.surface_preset);
    } else {
      const Fields sf = f.object("surface");
      sf.only({"name", "mu_forward", "mu_backward", "contact_stiffness", "contact_damping"});
      env::SurfaceModel m;
      m.name = sf.text("name", "inline");
      if (is_preset(m.name)) sf.fail("name", "inline surfaces must not reuse a preset name");
      m.mu_forward = sf.number("mu_forward");
      m.mu_backward = sf.number("mu_backward");
      m.contact_stiffness = sf.number("contact_stiffness", m.contact_stiffness);
      m.contact_damping = sf.number("contact_damping", m.contact_damping);
      c.surface = m;
    }
  } else {
    s.surface_preset = "plastic_table";
    c.surface = env::surface_preset(s.surface_preset);
  }
  s.slope_deg = f.number("slope_deg", 0.0);
  s.payload_g = f.number("payload_g", 0.0);
  if (s.payload_g < 0.0) f.fail("payload_g", "must be non-negative");
  s.tow_drag_area = f.maybe_number("tow_drag_area_m2");

  if (f.has("gait")) {
    const Fields g = f.object("gait");
    g.only({"freq_hz", "duty", "phase", "amplitude"});
    c.gait.freq_hz = g.number("freq_hz", c.gait.freq_hz);
    c.gait.duty = g.number("duty", c.gait.duty);
    c.gait.amplitude = g.number("amplitude", c.gait.amplitude);
    if (g.has("phase")) {
      const auto p = parse_phase(g.text("phase"));
      if (!p) g.fail("phase", "expected \"out_of_phase\" or \"in_phase\"");
      c.gait.phase = *p;
    }
    if (!fw::valid(c.gait)) f.fail("gait", "out of range (0.1..20 Hz, duty and amplitude in (0, 1])");
  }
  c.coil_offset = f.number("coil_offset", 0.0);
  if (std::abs(c.coil_offset) > 1.0) f.fail("coil_offset", "must lie in [-1, 1]");
  if (f.has("seed")) {
    const std::int64_t seed = f.integer("seed");
    if (seed < 0) f.fail("seed", "must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
  }
  c.initial_jitter = f.number("initial_jitter_m", 0.0);

  if (f.has("target")) {
    const Fields t = f.object("target");
    t.only({"mean_speed_cm_s", "yaw_rate_rad_s"});
    s.target_speed_cm_s = t.maybe_number("mean_speed_cm_s");
    s.target_yaw_rate = t.maybe_number("yaw_rate_rad_s");
  }
  if (f.has("report")) {
    const Fields r = f.object("report");
    r.only({"row", "scenario", "condition", "label", "measured", "observation", "metric"});
    ReportInfo info;
    info.row = static_cast<int>(r.integer("row"));
    info.scenario = r.text("scenario");
    info.condition = r.text("condition", "");
    info.label = r.text("label", "");
    info.measured = r.text("measured", "");
    info.observation = r.text("observation", "");
    if (r.has("metric")) {
      const auto m = parse_observable(r.text("metric"));
      if (!m) r.fail("metric", "expected mean_speed_cm_s or yaw_rate_rad_s");
      info.metric = *m;
    }
    s.report = info;
  }
  if (f.has("params")) {
    const fs::path p = base_dir / f.text("params");
    try {
      s.params = load_params(p);
    } catch (const Error& e) {
      f.fail("params", e.what());
    }
  }

  // Surface every range problem now, with the file name attached.
  try {
    sim::validate(resolve_config(s));
  } catch (const Error& e) {
    config_error(origin, e.what());
  }
  return s;
}

Scenario load_scenario(const fs::path& path) {
  Scenario s = parse_scenario(read_file(path), path.string(), path.parent_path());
  s.source = path;
  return s;
}

sim::SimConfig resolve_config(const Scenario& scenario, const ParamSet& extra) {
  sim::SimConfig c = scenario.config;
  const bool water = c.medium == Medium::water;
  if (water && !c.water) c.water = env::WaterModel{};
  c.surface.slope_deg = water ? 0.0 : scenario.slope_deg;
  c.payload = env::payload_for(scenario.payload_g, water);
  if (scenario.tow_drag_area && water) c.payload.tow_drag_area = *scenario.tow_drag_area;
  ParamSet merged = scenario.params;
  for (const auto& [k, v] : extra) merged[k] = v;
  apply_params(merged, c);
  return c;
}

// ----------------------------------------------------------------------- runs

double observe(const Summary& s, Observable o) {
  return o == Observable::yaw_rate_rad_s ? s.yaw_rate_rad_s : s.mean_speed_cm_s;
}

std::vector<TelemetryFrame> series_rows(std::span<const sim::SimSnapshot> snapshots) {
  std::vector<TelemetryFrame> rows;
  rows.reserve(snapshots.size());
  for (const sim::SimSnapshot& s : snapshots) {
    TelemetryFrame f = sim::snapshot_telemetry(s);
    f.t = std::round(f.t * 1e6) / 1e6;
    rows.push_back(f);
  }
  return rows;
}

Summary summarize(std::span<const TelemetryFrame> rows) {
  Summary s;
  if (rows.empty()) return s;
  const TelemetryFrame& first = rows.front();
  const TelemetryFrame& last = rows.back();
  s.duration = last.t - first.t;
  s.net_displacement_cm = std::hypot(last.x_cm - first.x_cm, last.y_cm - first.y_cm);

  const double t0 = first.t + 0.2 * s.duration;
  std::size_t k0 = 0;
  while (k0 + 1 < rows.size() && rows[k0].t < t0 - 1e-9) ++k0;

  double path = 0.0, turn = 0.0, heading = 0.0;
  for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
    const TelemetryFrame& a = rows[k];
    const TelemetryFrame& b = rows[k + 1];
    const double dh = wrap_angle(b.heading_rad - a.heading_rad);
    heading += dh;
    if (k >= k0) {
      path += (b.x_cm - a.x_cm) * std::cos(a.heading_rad) +
              (b.y_cm - a.y_cm) * std::sin(a.heading_rad);
      turn += dh;
    }
    if (b.mode == Mode::cooldown && a.mode != Mode::cooldown) ++s.cooldown_trips;
  }
  s.heading_change_rad = heading;
  const double window = last.t - rows[k0].t;
  if (window > 0.0) {
    s.mean_speed_cm_s = path / window;
    s.yaw_rate_rad_s = turn / window;
  }
  return s;
}

std::string csv_text(std::span<const TelemetryFrame> rows) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const TelemetryFrame& r : rows) {
    for (const double v : {r.t, r.x_cm, r.y_cm, r.heading_rad, r.v_cm_s, r.front_leg_x_cm,
                           r.back_leg_x_cm}) {
      out += format_exact(v);
      out += ',';
    }
    out += to_string(r.mode);
    out += ',';
    out += format_exact(r.thermal_budget);
    out += '\n';
  }
  return out;
}

std::vector<TelemetryFrame> parse_csv(std::string_view text, const std::string& origin) {
  std::vector<TelemetryFrame> rows;
  std::size_t line_no = 0;
  bool header = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!header) {
      if (line != kCsvHeader) config_error(origin, "line 1: unexpected header");
      header = true;
      continue;
    }
    if (line.empty()) continue;
    std::array<std::string_view, 9> cells;
    std::size_t n = 0;
    while (true) {
      const auto comma = line.find(',');
      if (n == cells.size()) config_error(origin, "line " + std::to_string(line_no) + ": too many columns");
      cells[n++] = line.substr(0, comma);
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (n != cells.size()) {
      config_error(origin, "line " + std::to_string(line_no) + ": expected 9 columns");
    }
    TelemetryFrame f;
    double* numeric[] = {&f.t, &f.x_cm, &f.y_cm, &f.heading_rad, &f.v_cm_s, &f.front_leg_x_cm,
                         &f.back_leg_x_cm};
    for (std::size_t i = 0; i < 7; ++i) *numeric[i] = parse_double(cells[i], origin, line_no);
    const auto mode = parse_mode(cells[7]);
    if (!mode) config_error(origin, "line " + std::to_string(line_no) + ": bad mode");
    f.mode = *mode;
    f.thermal_budget = parse_double(cells[8], origin, line_no);
    rows.push_back(f);
  }
  if (!header) config_error(origin, "empty file");
  return rows;
}

namespace {

ojson report_to_json(const ReportInfo& r) {
  ojson j;
  j["row"] = r.row;
  j["scenario"] = r.scenario;
  j["condition"] = r.condition;
  j["label"] = r.label;
  j["measured"] = r.measured;
  j["observation"] = r.observation;
  j["metric"] = std::string(to_string(r.metric));
  return j;
}

}  // namespace

std::string record_json(const RunRecord& r) {
  ojson j;
  j["schema_version"] = kSchemaVersion;
  j["scenario"] = r.scenario;
  j["series"] = r.series;
  ojson s;
  s["duration_s"] = r.summary.duration;
  s["mean_speed_cm_s"] = r.summary.mean_speed_cm_s;
  s["yaw_rate_rad_s"] = r.summary.yaw_rate_rad_s;
  s["net_displacement_cm"] = r.summary.net_displacement_cm;
  s["heading_change_rad"] = r.summary.heading_change_rad;
  s["cooldown_trips"] = r.summary.cooldown_trips;
  j["summary"] = s;
  if (r.target_speed_cm_s || r.target_yaw_rate) {
    ojson t = ojson::object();
    if (r.target_speed_cm_s) t["mean_speed_cm_s"] = *r.target_speed_cm_s;
    if (r.target_yaw_rate) t["yaw_rate_rad_s"] = *r.target_yaw_rate;
    j["target"] = t;
  }
  if (r.report) j["report"] = report_to_json(*r.report);
  return j.dump(2) + "\n";
}

RunRecord parse_record(std::string_view text, const std::string& origin) {
  const json j = parse_json(text, origin);
  const Fields f(j, "", origin);
  f.only({"schema_version", "scenario", "series", "summary", "target", "report"});
  check_schema(f);
  RunRecord r;
  r.scenario = f.text("scenario");
  r.series = f.text("series");
  const Fields s = f.object("summary");
  r.summary.duration = s.number("duration_s");
  r.summary.mean_speed_cm_s = s.number("mean_speed_cm_s");
  r.summary.yaw_rate_rad_s = s.number("yaw_rate_rad_s");
  r.summary.net_displacement_cm = s.number("net_displacement_cm");
  r.summary.heading_change_rad = s.number("heading_change_rad");
  r.summary.cooldown_trips = static_cast<int>(s.integer("cooldown_trips"));
  if (f.has("target")) {
    const Fields t = f.object("target");
    r.target_speed_cm_s = t.maybe_number("mean_speed_cm_s");
    r.target_yaw_rate = t.maybe_number("yaw_rate_rad_s");
  }
  if (f.has("report")) {
    const Fields rp = f.object("report");
    ReportInfo info;
    info.row = static_cast<int>(rp.integer("row"));
    info.scenario = rp.text("scenario");
    info.condition = rp.text("condition", "");
    info.label = rp.text("label", "");
    info.measured = rp.text("measured", "");
    info.observation = rp.text("observation", "");
    const auto m = parse_observable(rp.text("metric", "mean_speed_cm_s"));
    if (!m) rp.fail("metric", "unknown observable");
    info.metric = *m;
    r.report = info;
  }
  return r;
}

std::vector<TelemetryFrame> simulate(const Scenario& scenario, const ParamSet& extra) {
  const sim::SimConfig config = resolve_config(scenario, extra);
  std::vector<TelemetryFrame> rows;
  sim::run(config, [&](const sim::SimSnapshot& s) {
    rows.push_back(series_rows(std::span(&s, 1)).front());
  });
  return rows;
}

fs::path record_path_for(const fs::path& csv_path) {
  fs::path p = csv_path;
  p.replace_extension();
  p += ".record.json";
  return p;
}

RunRecord run_scenario(const Scenario& scenario, const fs::path& csv_path) {
  const std::vector<TelemetryFrame> rows = simulate(scenario);
  write_file(csv_path, csv_text(rows));
  RunRecord r;
  r.scenario = scenario.name;
  r.series = csv_path.filename().string();
  r.summary = summarize(rows);
  r.target_speed_cm_s = scenario.target_speed_cm_s;
  r.target_yaw_rate = scenario.target_yaw_rate;
  r.report = scenario.report;
  write_file(record_path_for(csv_path), record_json(r));
  return r;
}

// --------------------------------------------------------------------- sweeps

SweepResult frequency_sweep(const Scenario& base, std::span<const double> freqs,
                            const ParamSet& extra) {
  SweepResult out;
  for (const double f : freqs) {
    SweepRow row;
    row.freq_hz = f;
    Scenario s = base;
    s.config.gait.freq_hz = f;
    try {
      if (!fw::valid(s.config.gait)) {
        throw Error(ErrorCode::config, "frequency outside 0.1..20 Hz");
      }
      row.mean_speed_cm_s = summarize(simulate(s, extra)).mean_speed_cm_s;
    } catch (const Error& e) {
      row.error = std::string(to_string(e.code())) + ": " + e.what();
    }
    out.rows.push_back(row);
  }
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    if (!out.rows[i].mean_speed_cm_s) continue;
    if (!out.argmax || *out.rows[i].mean_speed_cm_s > *out.rows[*out.argmax].mean_speed_cm_s) {
      out.argmax = i;
    }
  }
  if (out.argmax) {
    out.strict_max = true;
    const double best = *out.rows[*out.argmax].mean_speed_cm_s;
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
      if (i != *out.argmax && out.rows[i].mean_speed_cm_s && *out.rows[i].mean_speed_cm_s >= best) {
        out.strict_max = false;
      }
    }
  }
  return out;
}

std::string sweep_csv(const SweepResult& sweep) {
  std::string out = "freq_hz,mean_speed_cm_s,status\n";
  for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
    const SweepRow& r = sweep.rows[i];
    out += format_exact(r.freq_hz);
    out += ',';
    if (r.mean_speed_cm_s) {
      out += format_exact(*r.mean_speed_cm_s);
      out += sweep.argmax == i ? ",argmax" : ",ok";
    } else {
      // keep the row; the message loses its commas to stay one cell
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out += ",failed: " + msg;
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------- calibration

SearchResult direct_search(const std::function<double(std::span<const double>)>& evaluate,
                           std::span<const double> start, std::span<const double> lower,
                           std::span<const double> upper, int budget) {
  const std::size_t d = start.size();
  require(lower.size() == d && upper.size() == d, "bounds do not match the start point");
  for (std::size_t i = 0; i < d; ++i) {
    require(lower[i] <= upper[i], "lower bound above upper bound");
  }
  SearchResult r;
  r.x.assign(start.begin(), start.end());
  for (std::size_t i = 0; i < d; ++i) r.x[i] = std::clamp(r.x[i], lower[i], upper[i]);

  std::map<std::vector<double>, double> seen;
  // Evaluates and keeps the best point; nullopt once the budget is gone.
  const auto eval = [&](const std::vector<double>& x) -> std::optional<double> {
    if (const auto it = seen.find(x); it != seen.end()) return it->second;
    if (r.evaluations >= budget) return std::nullopt;
    ++r.evaluations;
    double v = evaluate(x);
    if (!std::isfinite(v)) v = std::numeric_limits<double>::max();
    seen.emplace(x, v);
    return v;
  };

  const auto v0 = eval(r.x);
  if (!v0) return r;  // zero budget: the start is returned unevaluated
  r.value = *v0;
  if (d == 0) return r;

  const auto offer = [&](const std::vector<double>& x, double v) {
    if (v < r.value) {
      r.value = v;
      r.x = x;
    }
  };

  // Golden-section along coordinate i inside [a, b]; `steps` new points.
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  const auto line = [&](std::size_t i, double a, double b, int steps) -> bool {
    std::vector<double> x = r.x;
    const auto at = [&](double t) -> std::optional<double> {
      x[i] = t;
      const auto v = eval(x);
      if (v) offer(x, *v);
      return v;
    };
    double c = b - g * (b - a), e = a + g * (b - a);
    auto fc = at(c);
    auto fe = at(e);
    if (!fc || !fe) return false;
    for (int k = 2; k < steps; ++k) {
      if (*fc < *fe) {
        b = e;
        e = c;
        fe = fc;
        c = b - g * (b - a);
        fc = at(c);
        if (!fc) return false;
      } else {
        a = c;
        c = e;
        fc = fe;
        e = a + g * (b - a);
        fe = at(e);
        if (!fe) return false;
      }
    }
    return true;
  };

  constexpr int kLineSteps = 6;
  const int grid_cost = static_cast<int>(4 * d);
  std::vector<double> radius(d);
  for (std::size_t i = 0; i < d; ++i) radius[i] = upper[i] - lower[i];

  // Coordinate sweeps, halving the bracket around the incumbent each time.
  bool first = true;
  while (budget - r.evaluations >= grid_cost + kLineSteps * static_cast<int>(d)) {
    for (std::size_t i = 0; i < d; ++i) {
      const double a = first ? lower[i] : std::max(lower[i], r.x[i] - radius[i]);
      const double b = first ? upper[i] : std::min(upper[i], r.x[i] + radius[i]);
      if (b > a) line(i, a, b, kLineSteps);
    }
    for (double& h : radius) h *= 0.5;
    first = false;
  }

  // One grid refinement: four offsets per coordinate around the incumbent.
  for (std::size_t i = 0; i < d; ++i) {
    const std::vector<double> centre = r.x;
    for (const double s : {-1.0, -0.5, 0.5, 1.0}) {
      std::vector<double> x = centre;
      x[i] = std::clamp(centre[i] + s * 0.5 * radius[i], lower[i], upper[i]);
      const auto v = eval(x);
      if (!v) return r;
      offer(x, *v);
    }
  }
  return r;
}

void load_targets(const fs::path& path, CalibrationSpec& spec) {
  const std::string origin = path.string();
  const json j = parse_json(read_file(path), origin);
  const Fields f(j, "", origin);
  f.only({"schema_version", "targets", "note"});
  check_schema(f);
  const json& list = f.array("targets");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const Fields t(list[i], "targets[" + std::to_string(i) + "]", origin);
    t.only({"scenario", "observable", "value", "weight", "note"});
    Scenario s = load_scenario(path.parent_path() / t.text("scenario"));
    Target target;
    target.scenario = s.name;
    const auto o = parse_observable(t.text("observable"));
    if (!o) t.fail("observable", "expected mean_speed_cm_s or yaw_rate_rad_s");
    target.observable = *o;
    target.value = t.number("value");
    if (target.value == 0.0) t.fail("value", "relative residuals need a non-zero target");
    target.weight = t.number("weight", 1.0);
    if (target.weight <= 0.0) t.fail("weight", "must be positive");
    spec.scenarios.insert_or_assign(s.name, std::move(s));
    spec.targets.push_back(target);
  }
  if (spec.targets.size() < 3) f.fail("targets", "at least 3 targets are needed");
}

namespace {

std::vector<FreeParam> parse_free(const Fields& parent, const char* key) {
  std::vector<FreeParam> out;
  const json& list = parent.array(key);
  for (std::size_t i = 0; i < list.size(); ++i) {
    const Fields p(list[i], parent.field(key) + "[" + std::to_string(i) + "]", parent.origin());
    p.only({"name", "lower", "upper"});
    FreeParam fp{p.text("name"), p.number("lower"), p.number("upper")};
    if (!(fp.lower <= fp.upper)) p.fail("upper", "must not be below lower");
    try {
      check_param_names({{fp.name, fp.lower}});
    } catch (const Error& e) {
      p.fail("name", e.what());
    }
    out.push_back(fp);
  }
  return out;
}

}  // namespace

void load_free_params(const fs::path& path, CalibrationSpec& spec) {
  const std::string origin = path.string();
  const json j = parse_json(read_file(path), origin);
  const Fields f(j, "", origin);
  f.only({"schema_version", "start", "stages", "free", "residual_threshold", "seed", "note"});
  check_schema(f);
  if (f.has("start")) spec.start = load_params(path.parent_path() / f.text("start"));
  spec.residual_threshold = f.number("residual_threshold", spec.residual_threshold);
  if (f.has("seed")) spec.seed = static_cast<std::uint64_t>(f.integer("seed"));
  spec.stages.clear();
  if (f.has("stages")) {
    if (f.has("free")) f.fail("free", "give either stages or a flat free list");
    const json& list = f.array("stages");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const Fields s(list[i], "stages[" + std::to_string(i) + "]", origin);
      s.only({"name", "scenarios", "free"});
      Stage st;
      st.name = s.text("name");
      st.free = parse_free(s, "free");
      const json& names = s.array("scenarios");
      for (const json& n : names) {
        if (!n.is_string()) s.fail("scenarios", "expected scenario names");
        st.scenarios.push_back(n.get<std::string>());
      }
      spec.stages.push_back(std::move(st));
    }
  } else {
    Stage st;
    st.name = "all";
    if (f.has("free")) st.free = parse_free(f, "free");
    spec.stages.push_back(std::move(st));
  }
}

namespace {

struct Evaluator {
  const CalibrationSpec& spec;
  const Progress& progress;
  int simulations = 0;
  std::map<std::pair<std::string, ParamSet>, std::optional<Summary>> cache;

  // nullopt when the run failed (instability or a rejected configuration)
  std::optional<Summary> run(const std::string& name, const ParamSet& params) {
    const auto key = std::pair{name, params};
    if (const auto it = cache.find(key); it != cache.end()) return it->second;
    ++simulations;
    std::optional<Summary> s;
    try {
      s = summarize(simulate(spec.scenarios.at(name), params));
    } catch (const Error&) {
      s.reset();
    }
    cache.emplace(key, s);
    if (progress) progress(name, simulations);
    return s;
  }

  // Failed runs count as a 100% miss on every target they carry.
  double objective(std::span<const Target* const> targets, const ParamSet& params,
                   std::vector<Residual>* out = nullptr) {
    double total = 0.0;
    for (const Target* t : targets) {
      const auto s = run(t->scenario, params);
      const double sim = s ? observe(*s, t->observable) : 0.0;
      const double rel = (sim - t->value) / t->value;
      total += t->weight * rel * rel;
      if (out) out->push_back({*t, sim, rel});
    }
    return total;
  }
};

std::set<std::string> scenario_set(std::span<const Target* const> targets) {
  std::set<std::string> out;
  for (const Target* t : targets) out.insert(t->scenario);
  return out;
}

}  // namespace

CalibrationResult calibrate(const CalibrationSpec& spec, const Progress& progress) {
  require(spec.budget >= 0, "budget must be non-negative", ErrorCode::config);
  for (const Target& t : spec.targets) {
    if (!spec.scenarios.contains(t.scenario)) {
      throw Error(ErrorCode::config, "target names unknown scenario '" + t.scenario + "'");
    }
  }
  check_param_names(spec.start);

  Evaluator ev{spec, progress, 0, {}};
  CalibrationResult result;
  result.params = spec.start;

  std::vector<const Target*> all;
  for (const Target& t : spec.targets) all.push_back(&t);
  const int reserve = static_cast<int>(scenario_set(all).size());

  // Targets and cost per stage; budget is shared in proportion to
  // (free parameters x scenarios), with unspent simulations rolling over.
  std::vector<std::vector<const Target*>> stage_targets;
  std::vector<double> weight;
  for (const Stage& st : spec.stages) {
    std::vector<const Target*> ts;
    for (const Target& t : spec.targets) {
      if (st.scenarios.empty() ||
          std::find(st.scenarios.begin(), st.scenarios.end(), t.scenario) != st.scenarios.end()) {
        ts.push_back(&t);
      }
    }
    for (const std::string& n : st.scenarios) {
      if (!spec.scenarios.contains(n)) {
        throw Error(ErrorCode::config, "stage '" + st.name + "' names unknown scenario '" + n + "'");
      }
    }
    weight.push_back(static_cast<double>(st.free.size() * scenario_set(ts).size()));
    stage_targets.push_back(std::move(ts));
  }

  for (std::size_t k = 0; k < spec.stages.size(); ++k) {
    const Stage& st = spec.stages[k];
    const auto& ts = stage_targets[k];
    StageReport rep{st.name, 0.0, 0.0, 0};
    const int before = ev.simulations;
    const int cost = std::max<int>(1, static_cast<int>(scenario_set(ts).size()));
    const double w_rest = std::accumulate(weight.begin() + static_cast<long>(k), weight.end(), 0.0);
    const int available = std::max(0, spec.budget - reserve - ev.simulations);
    const int stage_sims =
        w_rest > 0.0 ? static_cast<int>(std::floor(available * weight[k] / w_rest)) : 0;

    std::vector<double> x0, lo, hi;
    for (const FreeParam& p : st.free) {
      const auto it = result.params.find(p.name);
      x0.push_back(std::clamp(it != result.params.end() ? it->second : 0.5 * (p.lower + p.upper),
                              p.lower, p.upper));
      lo.push_back(p.lower);
      hi.push_back(p.upper);
    }
    const auto with = [&](std::span<const double> x) {
      ParamSet p = result.params;
      for (std::size_t i = 0; i < x.size(); ++i) p[st.free[i].name] = x[i];
      return p;
    };
    const auto f = [&](std::span<const double> x) { return ev.objective(ts, with(x)); };

    if (!ts.empty() && !st.free.empty() && stage_sims >= cost) {
      const SearchResult sr = direct_search(f, x0, lo, hi, stage_sims / cost);
      rep.objective_start = sr.evaluations > 0 ? ev.objective(ts, with(x0)) : 0.0;
      rep.objective = sr.value;
      result.params = with(sr.x);
    } else if (!ts.empty() && ev.simulations + cost <= spec.budget) {
      rep.objective_start = rep.objective = f(x0);
    }
    rep.simulations = ev.simulations - before;
    result.stages.push_back(rep);
  }

  result.objective = ev.objective(all, result.params, &result.residuals);
  result.simulations = ev.simulations;
  result.converged = std::all_of(result.residuals.begin(), result.residuals.end(),
                                 [&](const Residual& r) {
                                   return std::abs(r.relative) <= spec.residual_threshold;
                                 });
  return result;
}

std::string residual_report(const CalibrationResult& result) {
  std::ostringstream out;
  char buf[256];
  out << "scenario                 observable        target      simulated   residual\n";
  for (const Residual& r : result.residuals) {
    std::snprintf(buf, sizeof buf, "%-24s %-17s %-11.4g %-11.4g %+.1f%%\n",
                  r.target.scenario.c_str(), std::string(to_string(r.target.observable)).c_str(),
                  r.target.value, r.simulated, 100.0 * r.relative);
    out << buf;
  }
  for (const StageReport& s : result.stages) {
    std::snprintf(buf, sizeof buf, "stage %-10s objective %.4g -> %.4g  (%d simulations)\n",
                  s.name.c_str(), s.objective_start, s.objective, s.simulations);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "objective %.4g, %d simulations, %s\n", result.objective,
                result.simulations, result.converged ? "converged" : "NOT converged");
  out << buf;
  return out.str();
}

// --------------------------------------------------------------------- report

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  // no "-0.00"
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string cell_value(const RunRecord& r, Observable metric) {
  if (metric == Observable::yaw_rate_rad_s) {
    std::string s = fixed(r.summary.yaw_rate_rad_s, 3) + " rad/s";
    if (r.summary.yaw_rate_rad_s != 0.0) {
      s += ", radius " +
           fixed(std::abs(r.summary.mean_speed_cm_s / r.summary.yaw_rate_rad_s), 1) + " cm";
    }
    return s;
  }
  return fixed(r.summary.mean_speed_cm_s, 2) + " cm/s";
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

ReportTable summary_report(std::span<const RunRecord> records) {
  require(!records.empty(), "report needs at least one record", ErrorCode::config);
  struct Group {
    int row;
    std::size_t first;
    std::vector<const RunRecord*> members;
  };
  std::vector<Group> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const RunRecord& r = records[i];
    if (r.report) {
      const auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
        return g.members.front()->report && g.row == r.report->row;
      });
      if (it != groups.end()) {
        it->members.push_back(&r);
        continue;
      }
    }
    groups.push_back({r.report ? r.report->row : std::numeric_limits<int>::max(), i, {&r}});
  }
  std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
    return a.row != b.row ? a.row < b.row : a.first < b.first;
  });

  ReportTable t;
  for (const Group& g : groups) {
    const RunRecord& head = *g.members.front();
    std::string sim, measured;
    for (const RunRecord* m : g.members) {
      const Observable metric = m->report ? m->report->metric : Observable::mean_speed_cm_s;
      const std::string label = m->report ? m->report->label : "";
      if (!sim.empty()) sim += "; ";
      sim += (label.empty() ? "" : label + ": ") + cell_value(*m, metric);
      if (m->report && !m->report->measured.empty()) {
        if (!measured.empty()) measured += "; ";
        measured += (label.empty() || g.members.size() == 1 ? "" : label + ": ") + m->report->measured;
      }
    }
    std::string perf = "sim " + sim;
    if (!measured.empty()) perf += " (measured " + measured + ")";
    if (head.report) {
      t.rows.push_back({head.report->scenario, head.report->condition, perf,
                        head.report->observation});
    } else {
      t.rows.push_back({head.scenario, "", perf, ""});
    }
  }
  return t;
}

std::string report_text(const ReportTable& table) {
  const std::array<std::string, 4> header{"Scenario", "Condition", "Max Performance",
                                          "Key Observation"};
  std::array<std::size_t, 4> w{};
  for (std::size_t c = 0; c < 4; ++c) w[c] = header[c].size();
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < 4; ++c) w[c] = std::max(w[c], row[c].size());
  }
  const auto line = [&](const std::array<std::string, 4>& row) {
    std::string s;
    for (std::size_t c = 0; c < 4; ++c) {
      s += c == 0 ? "" : " | ";
      s += row[c];
      if (c < 3) s.append(w[c] - row[c].size(), ' ');
    }
    return s + "\n";
  };
  std::string out = line(header);
  for (std::size_t c = 0; c < 4; ++c) {
    out += c == 0 ? "" : "-+-";
    out.append(w[c], '-');
  }
  out += '\n';
  for (const auto& row : table.rows) out += line(row);
  return out;
}

std::string report_csv(const ReportTable& table) {
  std::string out = "Scenario,Condition,Max Performance,Key Observation\n";
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < 4; ++c) {
      out += c == 0 ? "" : ",";
      out += csv_cell(row[c]);
    }
    out += '\n';
  }
  return out;
}

bool natural_less(std::string_view a, std::string_view b) {
  const auto digit = [](char c) { return c >= '0' && c <= '9'; };
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (digit(a[i]) && digit(b[j])) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && digit(a[ie])) ++ie;
      while (je < b.size() && digit(b[je])) ++je;
      std::string_view na = a.substr(i, ie - i), nb = b.substr(j, je - j);
      while (na.size() > 1 && na.front() == '0') na.remove_prefix(1);
      while (nb.size() > 1 && nb.front() == '0') nb.remove_prefix(1);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return a.size() - i < b.size() - j;
}

std::vector<RunRecord> load_records(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::config, dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    if (e.is_regular_file() && n.size() > 12 && n.ends_with(".record.json")) {
      files.push_back(e.path());
    }
  }
  // digit runs compare as numbers, so cargo_50g sorts before cargo_105g
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return natural_less(a.filename().string(), b.filename().string());
  });
  std::vector<RunRecord> out;
  for (const fs::path& p : files) out.push_back(parse_record(read_file(p), p.string()));
  return out;
}

}  // namespace inchworm::harness
