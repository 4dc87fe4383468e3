// Scenario files, runs and their CSV series, frequency sweeps, staged
// calibration and the summary table.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "inchworm/commands.hpp"
#include "inchworm/sim.hpp"

namespace inchworm::harness {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kCsvHeader =
    "t,x_cm,y_cm,heading_rad,v_cm_s,front_leg_x_cm,back_leg_x_cm,mode,thermal_budget";

// ---------------------------------------------------------------- parameters

/// Named model parameters. Known names: "<preset>.mu_forward",
/// "<preset>.mu_backward", "damping_ratio", "k_turn", "drag_coefficient",
/// "coil_travel_mm", "bending_stiffness_scale".
using ParamSet = std::map<std::string, double, std::less<>>;

/// Throws Error(config) naming the first unknown parameter.
void check_param_names(const ParamSet& params);

/// Applies `params` on top of `config`. Surface entries go to the preset
/// overrides; the active surface is refreshed when it is one of the presets.
void apply_params(const ParamSet& params, sim::SimConfig& config);

ParamSet load_params(const fs::path& path);
std::string params_json(const ParamSet& params);
void save_params(const ParamSet& params, const fs::path& path);

// ------------------------------------------------------------------ scenarios

enum class Observable { mean_speed_cm_s, yaw_rate_rad_s };
std::string_view to_string(Observable o);
std::optional<Observable> parse_observable(std::string_view s);

/// Text for the summary table.
struct ReportInfo {
  int row = 0;              // table row; scenarios sharing a row are merged
  std::string scenario;     // row label
  std::string condition;
  std::string label;        // prefix inside a merged cell, e.g. "50 g"
  std::string measured;     // hardware value, as text
  std::string observation;
  Observable metric = Observable::mean_speed_cm_s;
};

struct Scenario {
  std::string name;
  fs::path source;                  // empty for scenarios built in code
  std::string surface_preset;       // empty when the surface is inline
  double slope_deg = 0.0;
  double payload_g = 0.0;
  std::optional<double> tow_drag_area;  // m^2, overrides the default for towed loads
  sim::SimConfig config;            // before params are applied
  ParamSet params;                  // from the scenario's params file, if any
  std::optional<double> target_speed_cm_s;
  std::optional<double> target_yaw_rate;
  std::optional<ReportInfo> report;
};

/// Parses a scenario document. Errors carry `origin`, the line and column for
/// syntax errors, and the field path for missing or ill-typed fields.
Scenario parse_scenario(std::string_view text, const std::string& origin = "<scenario>",
                        const fs::path& base_dir = {});
Scenario load_scenario(const fs::path& path);

/// Scenario config with its own params plus `extra` (extra wins).
sim::SimConfig resolve_config(const Scenario& scenario, const ParamSet& extra = {});

// ----------------------------------------------------------------------- runs

struct Summary {
  double duration = 0.0;             // s
  double mean_speed_cm_s = 0.0;      // forward path length over the last 80%
  double yaw_rate_rad_s = 0.0;       // heading change over the last 80%
  double net_displacement_cm = 0.0;  // straight-line, whole run
  double heading_change_rad = 0.0;   // unwrapped, whole run
  int cooldown_trips = 0;
  bool operator==(const Summary&) const = default;
};

double observe(const Summary& s, Observable o);

/// Rows as written to the CSV (time rounded to the microsecond).
std::vector<TelemetryFrame> series_rows(std::span<const sim::SimSnapshot> snapshots);

Summary summarize(std::span<const TelemetryFrame> rows);

std::string csv_text(std::span<const TelemetryFrame> rows);
std::vector<TelemetryFrame> parse_csv(std::string_view text, const std::string& origin = "<csv>");

struct RunRecord {
  std::string scenario;
  std::string series;  // CSV file name, relative to the record
  Summary summary;
  std::optional<double> target_speed_cm_s;
  std::optional<double> target_yaw_rate;
  std::optional<ReportInfo> report;
};

std::string record_json(const RunRecord& record);
RunRecord parse_record(std::string_view text, const std::string& origin = "<record>");

/// Runs the scenario; throws InstabilityError or Error(config).
std::vector<TelemetryFrame> simulate(const Scenario& scenario, const ParamSet& extra = {});

/// Runs, writes `csv_path` and `<csv stem>.record.json` beside it.
RunRecord run_scenario(const Scenario& scenario, const fs::path& csv_path);

fs::path record_path_for(const fs::path& csv_path);

// --------------------------------------------------------------------- sweeps

struct SweepRow {
  double freq_hz = 0.0;
  std::optional<double> mean_speed_cm_s;
  std::string error;  // set when the run failed
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::optional<std::size_t> argmax;  // index of the fastest completed run
  bool strict_max = false;            // argmax beats every other completed row
};

SweepResult frequency_sweep(const Scenario& base, std::span<const double> freqs,
                            const ParamSet& extra = {});
std::string sweep_csv(const SweepResult& sweep);

// ---------------------------------------------------------------- calibration

struct Target {
  std::string scenario;
  Observable observable = Observable::mean_speed_cm_s;
  double value = 0.0;
  double weight = 1.0;
};

struct FreeParam {
  std::string name;
  double lower = 0.0, upper = 0.0;
};

struct Stage {
  std::string name;
  std::vector<FreeParam> free;
  std::vector<std::string> scenarios;  // targets on these scenarios enter this stage
};

struct CalibrationSpec {
  std::vector<Target> targets;
  std::map<std::string, Scenario, std::less<>> scenarios;
  std::vector<Stage> stages;  // a single stage over every target when built from a flat list
  ParamSet start;
  int budget = 200;                  // simulations
  double residual_threshold = 0.15;  // relative
  std::uint64_t seed = 1;
};

/// Targets file: {"schema_version", "targets": [{"scenario": file, "observable",
/// "value", "weight"}]}; scenario paths are relative to the file.
void load_targets(const fs::path& path, CalibrationSpec& spec);
/// Free-parameter file: {"schema_version", "start"?: params file,
/// "stages": [{"name", "scenarios", "free": [{"name", "lower", "upper"}]}]}
/// or a flat "free" list.
void load_free_params(const fs::path& path, CalibrationSpec& spec);

struct Residual {
  Target target;
  double simulated = 0.0;
  double relative = 0.0;  // (sim - target) / target
};

struct StageReport {
  std::string name;
  double objective_start = 0.0;
  double objective = 0.0;
  int simulations = 0;
};

struct CalibrationResult {
  ParamSet params;
  std::vector<Residual> residuals;
  std::vector<StageReport> stages;
  int simulations = 0;
  double objective = 0.0;  // over all targets at the returned params
  bool converged = false;  // every |relative| <= threshold
};

/// Per-simulation progress hook (scenario name, simulations used so far).
using Progress = std::function<void(const std::string&, int)>;

CalibrationResult calibrate(const CalibrationSpec& spec, const Progress& progress = {});

std::string residual_report(const CalibrationResult& result);

/// Bounded direct search used by each stage: coordinate descent with
/// golden-section line steps, then one grid refinement. `evaluate` returns
/// the objective; the search stops asking when `budget` calls are used.
/// Never returns a point worse than `start`.
struct SearchResult {
  std::vector<double> x;
  double value = 0.0;
  int evaluations = 0;
};
SearchResult direct_search(const std::function<double(std::span<const double>)>& evaluate,
                           std::span<const double> start, std::span<const double> lower,
                           std::span<const double> upper, int budget);

// --------------------------------------------------------------------- report

struct ReportTable {
  std::vector<std::array<std::string, 4>> rows;  // without header
};

ReportTable summary_report(std::span<const RunRecord> records);
std::string report_text(const ReportTable& table);
std::string report_csv(const ReportTable& table);

/// Name order with digit runs compared numerically ("a_50" < "a_105").
bool natural_less(std::string_view a, std::string_view b);

/// Every `*.record.json` under `dir`, in natural file-name order.
std::vector<RunRecord> load_records(const fs::path& dir);

// ------------------------------------------------------------------- helpers

/// Shortest round-trip decimal; "0" for zero.
std::string format_exact(double v);
std::string read_file(const fs::path& path);
void write_file(const fs::path& path, std::string_view text);

}  // namespace inchworm::harness
