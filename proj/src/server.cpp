#include "inchworm/server.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "inchworm/protocol.hpp"

namespace inchworm::server {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using Clock = std::chrono::steady_clock;

namespace {

class Session;

// Everything the transports need from the simulation side.
class Hub {
 public:
  virtual ~Hub() = default;
  virtual void submit(const std::shared_ptr<Session>& from, proto::Decoded d) = 0;
  virtual void attach(const std::shared_ptr<Session>& s) = 0;
};

// Outgoing side shared by both transports. Responses are never dropped;
// telemetry keeps only the newest `cap` frames.
class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(net::io_context& ioc, std::size_t cap) : strand_(net::make_strand(ioc)), cap_(cap) {}
  virtual ~Session() = default;

  void deliver_response(std::string line) {
    net::post(strand_, [self = shared_from_this(), l = std::move(line)]() mutable {
      self->responses_.push_back(std::move(l));
      self->pump();
    });
  }

  void deliver_telemetry(std::string line) {
    net::post(strand_, [self = shared_from_this(), l = std::move(line)]() mutable {
      if (self->telemetry_.size() >= self->cap_) self->telemetry_.pop_front();
      self->telemetry_.push_back(std::move(l));
      self->pump();
    });
  }

  virtual void close() = 0;
  bool closed() const { return closed_.load(); }

 protected:
  using WriteDone = std::function<void(beast::error_code)>;
  virtual void write_one(const std::string& msg, WriteDone done) = 0;

  void pump() {
    if (writing_ || closed_) return;
    std::deque<std::string>& q = responses_.empty() ? telemetry_ : responses_;
    if (q.empty()) return;
    current_ = std::move(q.front());
    q.pop_front();
    writing_ = true;
    write_one(current_, [self = shared_from_this()](beast::error_code ec) {
      self->writing_ = false;
      if (ec) {
        self->close();
        return;
      }
      self->pump();
    });
  }

  net::strand<net::io_context::executor_type> strand_;
  std::atomic<bool> closed_{false};
  proto::SessionDecoder decoder_;

 private:
  std::size_t cap_;
  std::deque<std::string> responses_;
  std::deque<std::string> telemetry_;
  std::string current_;
  bool writing_ = false;
};

class TcpSession : public Session {
 public:
  TcpSession(tcp::socket socket, net::io_context& ioc, Hub& hub, std::size_t cap)
      : Session(ioc, cap), socket_(std::move(socket)), hub_(hub) {}

  void run() {
    hub_.attach(shared_from_this());
    net::dispatch(strand_, [self = std::static_pointer_cast<TcpSession>(shared_from_this())] {
      self->read();
    });
  }

  void close() override {
    net::post(strand_, [self = shared_from_this(), this] {
      if (closed_.exchange(true)) return;
      beast::error_code ec;
      socket_.shutdown(tcp::socket::shutdown_both, ec);
      socket_.close(ec);
    });
  }

 private:
  void write_one(const std::string& msg, WriteDone done) override {
    net::async_write(socket_, net::buffer(msg),
                     net::bind_executor(strand_, [done](beast::error_code ec, std::size_t) {
                       done(ec);
                     }));
  }

  void read() {
    socket_.async_read_some(
        net::buffer(chunk_),
        net::bind_executor(strand_, [self = std::static_pointer_cast<TcpSession>(
                                         shared_from_this())](beast::error_code ec,
                                                              std::size_t n) {
          if (ec) {
            self->close();
            return;
          }
          self->consume(std::string_view(self->chunk_.data(), n));
          self->read();
        }));
  }

  void consume(std::string_view bytes) {
    for (char ch : bytes) {
      if (ch == '\n') {
        if (discarding_) {
          discarding_ = false;
        } else if (auto d = decoder_.accept(pending_)) {
          hub_.submit(shared_from_this(), std::move(*d));
        }
        pending_.clear();
        continue;
      }
      if (discarding_) continue;
      pending_.push_back(ch);
      if (pending_.size() > proto::kMaxFrameBytes) {
        hub_.submit(shared_from_this(), Err{std::nullopt, ErrCode::frame_too_large});
        pending_.clear();
        discarding_ = true;
      }
    }
  }

  tcp::socket socket_;
  Hub& hub_;
  std::array<char, 4096> chunk_{};
  std::string pending_;
  bool discarding_ = false;
};

class WsSession : public Session {
 public:
  WsSession(tcp::socket socket, net::io_context& ioc, Hub& hub, std::size_t cap)
      : Session(ioc, cap), ws_(std::move(socket)), hub_(hub) {}

  void run() {
    net::dispatch(strand_, [self = std::static_pointer_cast<WsSession>(shared_from_this())] {
      self->read_upgrade();
    });
  }

  void close() override {
    net::post(strand_, [self = shared_from_this(), this] {
      if (closed_.exchange(true)) return;
      beast::error_code ec;
      beast::get_lowest_layer(ws_).shutdown(tcp::socket::shutdown_both, ec);
      beast::get_lowest_layer(ws_).close(ec);
    });
  }

 private:
  void write_one(const std::string& msg, WriteDone done) override {
    ws_.text(true);
    ws_.async_write(net::buffer(msg),
                    net::bind_executor(strand_, [done](beast::error_code ec, std::size_t) {
                      done(ec);
                    }));
  }

  void read_upgrade() {
    http::async_read(
        beast::get_lowest_layer(ws_), buffer_, request_,
        net::bind_executor(strand_, [self = std::static_pointer_cast<WsSession>(
                                         shared_from_this())](beast::error_code ec,
                                                              std::size_t) {
          if (ec) {
            self->close();
            return;
          }
          self->on_request();
        }));
  }

  void on_request() {
    if (!websocket::is_upgrade(request_) || request_.target() != "/ws") {
      auto res = std::make_shared<http::response<http::string_body>>(http::status::not_found,
                                                                     request_.version());
      res->set(http::field::content_type, "text/plain");
      res->body() = "websocket endpoint is /ws\n";
      res->prepare_payload();
      http::async_write(beast::get_lowest_layer(ws_), *res,
                        net::bind_executor(strand_, [self = shared_from_this(), res](
                                                        beast::error_code, std::size_t) {
                          self->close();
                        }));
      return;
    }
    ws_.read_message_max(64 * 1024);
    ws_.async_accept(request_, net::bind_executor(strand_, [self = std::static_pointer_cast<
                                                                WsSession>(shared_from_this())](
                                                               beast::error_code ec) {
                       if (ec) {
                         self->close();
                         return;
                       }
                       self->hub_.attach(self);
                       self->buffer_.clear();
                       self->read();
                     }));
  }

  void read() {
    ws_.async_read(buffer_, net::bind_executor(strand_, [self = std::static_pointer_cast<
                                                             WsSession>(shared_from_this())](
                                                            beast::error_code ec, std::size_t) {
                     if (ec) {
                       self->close();
                       return;
                     }
                     const std::string msg = beast::buffers_to_string(self->buffer_.data());
                     self->buffer_.consume(self->buffer_.size());
                     self->consume(msg);
                     self->read();
                   }));
  }

  // A message carries one or more newline-separated lines.
  void consume(std::string_view msg) {
    while (!msg.empty()) {
      const std::size_t nl = msg.find('\n');
      const std::string_view line = msg.substr(0, nl);
      if (auto d = decoder_.accept(line)) hub_.submit(shared_from_this(), std::move(*d));
      if (nl == std::string_view::npos) break;
      msg.remove_prefix(nl + 1);
    }
  }

  websocket::stream<tcp::socket> ws_;
  Hub& hub_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
};

}  // namespace

struct Server::Impl : Hub {
  explicit Impl(ServerConfig c) : config(std::move(c)), simulator(config.sim) {
    require(config.realtime_factor >= 0.0 && std::isfinite(config.realtime_factor),
            "realtime factor must be finite and non-negative");
    require(config.telemetry_rate_hz > 0.0, "telemetry rate must be positive");
    require(config.telemetry_queue > 0, "telemetry queue must hold at least one frame");
  }

  struct Pending {
    std::weak_ptr<Session> from;
    proto::Decoded decoded;
  };

  void submit(const std::shared_ptr<Session>& from, proto::Decoded d) override {
    {
      std::lock_guard lock(queue_mutex);
      queue.push_back({from, std::move(d)});
    }
    wake.notify_one();
  }

  void attach(const std::shared_ptr<Session>& s) override {
    std::lock_guard lock(sessions_mutex);
    std::erase_if(sessions, [](const std::weak_ptr<Session>& w) {
      auto p = w.lock();
      return !p || p->closed();
    });
    sessions.push_back(s);
  }

  std::size_t drain() {
    std::lock_guard order(drain_mutex);  // batches must not overtake each other
    std::deque<Pending> batch;
    {
      std::lock_guard lock(queue_mutex);
      batch.swap(queue);
    }
    for (auto& p : batch) {
      Response r;
      if (const auto* c = std::get_if<Command>(&p.decoded)) {
        std::lock_guard lock(sim_mutex);
        try {
          r = simulator.handle(*c);
        } catch (const Error&) {
          r = Err{c->cmd_id, ErrCode::bad_param};
        }
      } else {
        r = std::get<Err>(p.decoded);
      }
      if (auto s = p.from.lock()) s->deliver_response(proto::encode_response(r));
    }
    return batch.size();
  }

  void broadcast(const std::string& line) {
    std::vector<std::shared_ptr<Session>> live;
    {
      std::lock_guard lock(sessions_mutex);
      for (auto& w : sessions) {
        if (auto p = w.lock(); p && !p->closed()) live.push_back(std::move(p));
      }
    }
    for (auto& s : live) s->deliver_telemetry(line);
    frames_sent += live.size();
  }

  void sim_loop() {
    const auto period = std::chrono::duration_cast<Clock::duration>(
        std::chrono::duration<double>(1.0 / config.telemetry_rate_hz));
    auto last = Clock::now();
    auto next_frame = last + period;
    double sim_target = 0.0;
    {
      std::lock_guard lock(sim_mutex);
      sim_target = simulator.time();
    }
    while (!stopping) {
      drain();
      const auto now = Clock::now();
      if (config.realtime_factor > 0.0) {
        sim_target += std::chrono::duration<double>(now - last).count() * config.realtime_factor;
        std::lock_guard lock(sim_mutex);
        try {
          while (simulator.time() + 0.5 * simulator.config().dt < sim_target) simulator.step();
        } catch (const InstabilityError&) {
          // Leave the state as it was; the operator sees it stall and can reset.
          sim_target = simulator.time();
        }
      }
      last = now;
      if (now >= next_frame) {
        broadcast(proto::encode_telemetry(frame()));
        next_frame += period;
        if (next_frame < now) next_frame = now + period;
      }
      std::unique_lock lock(queue_mutex);
      wake.wait_until(lock, std::min(next_frame, Clock::now() + std::chrono::milliseconds(2)),
                      [&] { return stopping.load() || !queue.empty(); });
    }
  }

  TelemetryFrame frame() {
    std::lock_guard lock(sim_mutex);
    return sim::snapshot_telemetry(simulator.snapshot());
  }

  void accept(tcp::acceptor& acc, bool ws) {
    acc.async_accept(net::make_strand(ioc), [this, &acc, ws](beast::error_code ec,
                                                             tcp::socket socket) {
      if (ec) {
        if (ec == net::error::operation_aborted) return;
      } else if (ws) {
        std::make_shared<WsSession>(std::move(socket), ioc, *this, config.telemetry_queue)->run();
      } else {
        std::make_shared<TcpSession>(std::move(socket), ioc, *this, config.telemetry_queue)
            ->run();
      }
      if (acc.is_open()) accept(acc, ws);
    });
  }

  void open(tcp::acceptor& acc, const tcp::endpoint& ep) {
    acc.open(ep.protocol());
    acc.set_option(net::socket_base::reuse_address(true));
    acc.bind(ep);
    acc.listen();
  }

  void bind() {
    const auto addr = net::ip::make_address(config.bind_address);
    if (config.port != 0) {
      require(config.port < 65535, "port + 1 must be a valid port");
      open(ws_acceptor, {addr, config.port});
      open(tcp_acceptor, {addr, static_cast<std::uint16_t>(config.port + 1)});
      return;
    }
    for (int attempt = 0; attempt < 50; ++attempt) {
      beast::error_code ec;
      ws_acceptor = tcp::acceptor(ioc);
      tcp_acceptor = tcp::acceptor(ioc);
      open(ws_acceptor, {addr, 0});
      const auto p = ws_acceptor.local_endpoint().port();
      if (p == 65535) continue;
      tcp_acceptor.open(tcp::v4(), ec);
      if (!ec) tcp_acceptor.bind({addr, static_cast<std::uint16_t>(p + 1)}, ec);
      if (!ec) tcp_acceptor.listen(net::socket_base::max_listen_connections, ec);
      if (!ec) return;
      ws_acceptor.close();
      tcp_acceptor.close();
    }
    throw Error(ErrorCode::io, "no free pair of adjacent ports");
  }

  ServerConfig config;
  sim::Simulator simulator;
  mutable std::mutex sim_mutex;

  net::io_context ioc;
  tcp::acceptor ws_acceptor{ioc};
  tcp::acceptor tcp_acceptor{ioc};
  std::optional<net::executor_work_guard<net::io_context::executor_type>> work;
  std::thread io_thread;
  std::thread sim_thread;

  std::mutex drain_mutex;
  std::mutex queue_mutex;
  std::condition_variable wake;
  std::deque<Pending> queue;

  mutable std::mutex sessions_mutex;
  std::vector<std::weak_ptr<Session>> sessions;

  std::atomic<bool> stopping{false};
  std::atomic<bool> running{false};
  std::atomic<std::uint64_t> frames_sent{0};
  std::mutex done_mutex;
  std::condition_variable done;
};

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Server::~Server() { stop(); }

void Server::start() {
  Impl& m = *impl_;
  require(!m.running, "server already started");
  m.bind();
  m.work.emplace(net::make_work_guard(m.ioc));
  m.accept(m.ws_acceptor, true);
  m.accept(m.tcp_acceptor, false);
  m.running = true;
  m.io_thread = std::thread([&m] { m.ioc.run(); });
  m.sim_thread = std::thread([&m] { m.sim_loop(); });
}

void Server::stop() {
  Impl& m = *impl_;
  if (!m.running.exchange(false)) return;
  m.stopping = true;
  m.wake.notify_all();
  if (m.sim_thread.joinable()) m.sim_thread.join();
  net::post(m.ioc, [&m] {
    beast::error_code ec;
    m.ws_acceptor.close(ec);
    m.tcp_acceptor.close(ec);
  });
  {
    std::lock_guard lock(m.sessions_mutex);
    for (auto& w : m.sessions) {
      if (auto s = w.lock()) s->close();
    }
  }
  m.work.reset();
  m.ioc.stop();
  if (m.io_thread.joinable()) m.io_thread.join();
  {
    std::lock_guard lock(m.done_mutex);
  }
  m.done.notify_all();
}

void Server::wait() {
  std::unique_lock lock(impl_->done_mutex);
  impl_->done.wait(lock, [&] { return !impl_->running.load(); });
}

std::uint16_t Server::ws_port() const { return impl_->ws_acceptor.local_endpoint().port(); }
std::uint16_t Server::tcp_port() const { return impl_->tcp_acceptor.local_endpoint().port(); }

void Server::advance(double seconds) {
  impl_->drain();
  std::lock_guard lock(impl_->sim_mutex);
  impl_->simulator.advance(seconds);
}

std::size_t Server::drain_commands() { return impl_->drain(); }

TelemetryFrame Server::current_frame() const { return impl_->frame(); }

sim::SimSnapshot Server::snapshot() const {
  std::lock_guard lock(impl_->sim_mutex);
  return impl_->simulator.snapshot();
}

std::size_t Server::session_count() const {
  std::lock_guard lock(impl_->sessions_mutex);
  std::size_t n = 0;
  for (auto& w : impl_->sessions) {
    if (auto s = w.lock(); s && !s->closed()) ++n;
  }
  return n;
}

std::uint64_t Server::telemetry_frames_sent() const { return impl_->frames_sent; }

}  // namespace inchworm::server
