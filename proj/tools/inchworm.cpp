// Command-line front end: run, sweep, calibrate, serve, report.
//
// Exit codes: 0 ok, 2 configuration or I/O error, 3 instability,
// 4 calibration did not converge.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "inchworm/harness.hpp"
#include "inchworm/server.hpp"

namespace hs = inchworm::harness;
using inchworm::Error;
using inchworm::ErrorCode;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInstability = 3;
constexpr int kExitCalibration = 4;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

std::vector<double> parse_freqs(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw Error(ErrorCode::config, "bad frequency '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorCode::config, "no frequencies given");
  return out;
}

void print_summary(const hs::RunRecord& r) {
  std::printf("%s: mean speed %.4f cm/s, yaw rate %.4f rad/s, net displacement %.3f cm, "
              "heading change %.4f rad, cooldown trips %d\n",
              r.scenario.c_str(), r.summary.mean_speed_cm_s, r.summary.yaw_rate_rad_s,
              r.summary.net_displacement_cm, r.summary.heading_change_rad,
              r.summary.cooldown_trips);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inchworm soft robot twin"};
  app.require_subcommand(1);

  std::string scenario_path, out_path, params_path;
  auto* run = app.add_subcommand("run", "run one scenario and write its CSV series");
  run->add_option("--scenario", scenario_path, "scenario JSON")->required();
  run->add_option("--out", out_path, "CSV output; a .record.json lands beside it")->required();
  run->add_option("--params", params_path, "parameter file applied over the scenario's own");

  std::string freqs;
  auto* sweep = app.add_subcommand("sweep", "mean speed against gait frequency");
  sweep->add_option("--scenario", scenario_path, "base scenario JSON")->required();
  sweep->add_option("--freqs", freqs, "comma-separated list, Hz")->required();
  sweep->add_option("--out", out_path, "CSV output (stdout when absent)");
  sweep->add_option("--params", params_path, "parameter file applied over the scenario's own");

  std::string targets_path, free_path, cal_out, cal_report;
  int budget = 200;
  auto* cal = app.add_subcommand("calibrate", "fit free parameters to target observables");
  cal->add_option("--targets", targets_path, "targets JSON")->required();
  cal->add_option("--params", free_path, "free-parameter JSON (bounds and stages)")->required();
  cal->add_option("--budget", budget, "simulation budget")->capture_default_str();
  cal->add_option("--out", cal_out, "calibrated parameter file to write");
  cal->add_option("--report", cal_report, "residual report to write");

  int port = 8090;
  double rtf = 1.0, serve_seconds = 0.0;
  auto* serve = app.add_subcommand("serve", "live twin: WebSocket /ws on PORT, TCP on PORT+1");
  serve->add_option("--port", port, "WebSocket port")->capture_default_str();
  serve->add_option("--realtime-factor", rtf, "sim seconds per wall second")->capture_default_str();
  serve->add_option("--params", params_path, "parameter file for the surface presets");
  serve->add_option("--scenario", scenario_path, "scenario giving the initial configuration");
  serve->add_option("--seconds", serve_seconds, "stop after this many wall seconds (0: run until interrupted)");

  std::string records_dir, text_out, csv_out;
  auto* report = app.add_subcommand("report", "summary table from persisted run records");
  report->add_option("--records", records_dir, "directory of *.record.json")->required();
  report->add_option("--text", text_out, "text table (default <records>/summary.txt)");
  report->add_option("--csv", csv_out, "CSV table (default <records>/summary.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run) {
      hs::Scenario s = hs::load_scenario(scenario_path);
      if (!params_path.empty()) {
        for (const auto& [k, v] : hs::load_params(params_path)) s.params[k] = v;
      }
      print_summary(hs::run_scenario(s, out_path));
      return 0;
    }

    if (*sweep) {
      const hs::Scenario s = hs::load_scenario(scenario_path);
      const hs::ParamSet extra = params_path.empty() ? hs::ParamSet{} : hs::load_params(params_path);
      const std::vector<double> f = parse_freqs(freqs);
      const hs::SweepResult r = hs::frequency_sweep(s, f, extra);
      const std::string csv = hs::sweep_csv(r);
      if (out_path.empty()) {
        std::fputs(csv.c_str(), stdout);
      } else {
        hs::write_file(out_path, csv);
      }
      if (!r.argmax) {
        std::fprintf(stderr, "every run failed\n");
        return kExitInstability;
      }
      std::fprintf(stderr, "argmax %g Hz (%s)\n", r.rows[*r.argmax].freq_hz,
                   r.strict_max ? "strict" : "tied");
      return 0;
    }

    if (*cal) {
      hs::CalibrationSpec spec;
      spec.budget = budget;
      hs::load_free_params(free_path, spec);
      hs::load_targets(targets_path, spec);
      const hs::CalibrationResult r = hs::calibrate(spec, [](const std::string& name, int n) {
        std::fprintf(stderr, "\r[%3d] %-28s", n, name.c_str());
      });
      std::fprintf(stderr, "\n");
      const std::string text = hs::residual_report(r);
      std::fputs(text.c_str(), stdout);
      if (!cal_out.empty()) hs::save_params(r.params, cal_out);
      if (!cal_report.empty()) hs::write_file(cal_report, text);
      return r.converged ? 0 : kExitCalibration;
    }

    if (*serve) {
      if (port < 0 || port > 65534) throw Error(ErrorCode::config, "port out of range");
      inchworm::server::ServerConfig cfg;
      cfg.port = static_cast<std::uint16_t>(port);
      cfg.realtime_factor = rtf;
      if (!scenario_path.empty()) cfg.sim = hs::resolve_config(hs::load_scenario(scenario_path));
      if (!params_path.empty()) hs::apply_params(hs::load_params(params_path), cfg.sim);
      cfg.sim.autostart = false;
      inchworm::server::Server server(cfg);
      server.start();
      std::fprintf(stderr, "serving ws://%s:%u/ws and tcp %s:%u\n", cfg.bind_address.c_str(),
                   server.ws_port(), cfg.bind_address.c_str(), server.tcp_port());
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const auto t0 = std::chrono::steady_clock::now();
      while (!g_interrupted) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        if (serve_seconds > 0.0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >=
                serve_seconds) {
          break;
        }
      }
      server.stop();
      return 0;
    }

    if (*report) {
      const std::vector<hs::RunRecord> records = hs::load_records(records_dir);
      const hs::ReportTable table = hs::summary_report(records);
      const std::string text = hs::report_text(table);
      hs::write_file(text_out.empty() ? hs::fs::path(records_dir) / "summary.txt" : hs::fs::path(text_out),
                     text);
      hs::write_file(csv_out.empty() ? hs::fs::path(records_dir) / "summary.csv" : hs::fs::path(csv_out),
                     hs::report_csv(table));
      std::fputs(text.c_str(), stdout);
      return 0;
    }
  } catch (const inchworm::InstabilityError& e) {
    std::fprintf(stderr, "instability: %s\n", e.what());
    return kExitInstability;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    if (e.code() == ErrorCode::instability) return kExitInstability;
    if (e.code() == ErrorCode::calibration) return kExitCalibration;
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return 0;
}
