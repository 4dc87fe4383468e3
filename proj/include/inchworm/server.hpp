// Live twin behind a WebSocket endpoint (/ws on `port`) and a plain
// newline-delimited TCP socket (port + 1). All sessions feed one ordered
// command queue owned by the simulation thread.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>

#include "inchworm/sim.hpp"

namespace inchworm::server {

struct ServerConfig {
  std::uint16_t port = 8090;  // 0 picks a free pair of adjacent ports
  std::string bind_address = "127.0.0.1";
  double realtime_factor = 1.0;  // 0 pauses the clock; tests then call advance()
  double telemetry_rate_hz = 30.0;
  std::size_t telemetry_queue = 64;  // per-session frames kept before dropping the oldest
  sim::SimConfig sim;
};

class Server {
 public:
  explicit Server(ServerConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds both listeners and starts the network and simulation threads.
  void start();
  void stop();
  /// Blocks until stop() is called from elsewhere.
  void wait();

  std::uint16_t ws_port() const;
  std::uint16_t tcp_port() const;

  /// Paused-clock hook: applies queued commands, then steps `seconds` of sim
  /// time. Also usable while running in real time.
  void advance(double seconds);
  /// Applies queued commands without stepping; returns how many were handled.
  std::size_t drain_commands();
  /// Telemetry frame for the current state.
  TelemetryFrame current_frame() const;
  /// Copy of the full snapshot (tests compare transports with it).
  sim::SimSnapshot snapshot() const;
  std::size_t session_count() const;
  std::uint64_t telemetry_frames_sent() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace inchworm::server
