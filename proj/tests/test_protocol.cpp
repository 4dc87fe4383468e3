#include <gtest/gtest.h>

#include <random>

#include "inchworm/protocol.hpp"
#include "inchworm/sim.hpp"
#include "transcript.hpp"

using namespace inchworm;
using namespace inchworm::proto;

namespace {

Command random_command(std::mt19937_64& rng, std::int64_t id) {
  std::uniform_int_distribution<int> kind(0, 5), coin(0, 1), surf(0, 3);
  std::uniform_real_distribution<double> u(-100.0, 100.0), unit(0.0, 1.0);
  static const char* surfaces[] = {"plastic_table", "paper", "foam", "office_tile"};
  Command c;
  c.cmd_id = id;
  switch (kind(rng)) {
    case 0:
      c.body = cmd::SetGait{u(rng), unit(rng), coin(rng) ? PhaseMode::in_phase : PhaseMode::out_of_phase,
                            unit(rng)};
      break;
    case 1:
      c.body = cmd::SetCoilOffset{u(rng) * 1e-3};
      break;
    case 2:
      c.body = cmd::SetEnv{surfaces[surf(rng)], u(rng) * 0.3, std::abs(u(rng)) * 2.0,
                           coin(rng) ? Medium::water : Medium::ground};
      break;
    case 3:
      c.body = cmd::Start{};
      break;
    case 4:
      c.body = cmd::Stop{};
      break;
    default:
      c.body = cmd::Reset{};
  }
  return c;
}

sim::SimConfig live_config() {
  sim::SimConfig c;
  c.autostart = false;
  return c;
}

}  // namespace

TEST(Codec, MinimalStartFrame) {
  EXPECT_EQ(encode_command({1, cmd::Start{}}), "{\"type\":\"start\",\"cmd_id\":1}\n");
}

TEST(Codec, SetGaitFields) {
  const std::string s = encode_command({2, cmd::SetGait{4.0, 0.5, PhaseMode::out_of_phase, 1.0}});
  EXPECT_EQ(s,
            "{\"type\":\"set_gait\",\"cmd_id\":2,\"freq_hz\":4.0,\"duty\":0.5,"
            "\"phase\":\"out_of_phase\",\"amplitude\":1.0}\n");
  EXPECT_EQ(encode_command({3, cmd::SetEnv{"foam", 7.0, 50.0, Medium::ground}}),
            "{\"type\":\"set_env\",\"cmd_id\":3,\"surface\":\"foam\",\"slope_deg\":7.0,"
            "\"payload_g\":50.0,\"medium\":\"ground\"}\n");
  EXPECT_EQ(encode_command({4, cmd::SetCoilOffset{-0.5}}),
            "{\"type\":\"set_coil_offset\",\"cmd_id\":4,\"offset\":-0.5}\n");
}

TEST(Codec, CommandRoundTrip) {
  std::mt19937_64 rng(101);
  for (int k = 0; k < 1000; ++k) {
    const Command c = random_command(rng, k * 37 - 500);
    const std::string line = encode_command(c);
    ASSERT_EQ(line.back(), '\n');
    ASSERT_EQ(line.find('\n'), line.size() - 1);
    const Decoded d = decode_command(line);
    ASSERT_TRUE(std::holds_alternative<Command>(d)) << line;
    EXPECT_EQ(std::get<Command>(d), c) << line;
  }
}

TEST(Codec, DecodeErrors) {
  const auto err = [](std::string_view line) {
    const Decoded d = decode_command(line);
    EXPECT_TRUE(std::holds_alternative<Err>(d)) << line;
    return std::holds_alternative<Err>(d) ? std::get<Err>(d) : Err{};
  };
  EXPECT_EQ(std::get<Command>(decode_command("{\"type\":\"stop\",\"cmd_id\":7}")),
            (Command{7, cmd::Stop{}}));
  EXPECT_EQ(err("{\"type\":\"fly\"}").code, ErrCode::unknown_cmd);
  EXPECT_EQ(err("{\"type\":\"fly\",\"cmd_id\":3}"), (Err{3, ErrCode::unknown_cmd}));
  EXPECT_EQ(err("{\"type\":\"stop\",\"cmd_").code, ErrCode::bad_param);
  EXPECT_EQ(err("{\"type\":\"start\"}").code, ErrCode::bad_param);
  EXPECT_EQ(err("{\"type\":\"set_coil_offset\",\"cmd_id\":2,\"offset\":\"left\"}"),
            (Err{2, ErrCode::bad_param}));
  EXPECT_EQ(err("{\"type\":\"set_gait\",\"cmd_id\":2,\"freq_hz\":4,\"duty\":0.5,\"phase\":\"sideways\",\"amplitude\":1}")
                .code,
            ErrCode::bad_param);
  EXPECT_EQ(err("[1,2,3]").code, ErrCode::bad_param);
  EXPECT_EQ(err(std::string(4097, ' ')).code, ErrCode::frame_too_large);
  EXPECT_EQ(err("{\"type\":\"start\",\"cmd_id\":1.5}").code, ErrCode::bad_param);
}

TEST(Codec, SessionIdsMustIncrease) {
  SessionDecoder s;
  EXPECT_FALSE(s.accept("   \r\n").has_value());
  EXPECT_TRUE(std::holds_alternative<Command>(*s.accept("{\"type\":\"start\",\"cmd_id\":5}\n")));
  const auto again = s.accept("{\"type\":\"stop\",\"cmd_id\":5}\n");
  EXPECT_EQ(std::get<Err>(*again), (Err{5, ErrCode::bad_param}));
  EXPECT_TRUE(std::holds_alternative<Command>(*s.accept("{\"type\":\"stop\",\"cmd_id\":6}\r\n")));
}

TEST(Codec, Responses) {
  EXPECT_EQ(encode_response(Ack{3, Mode::walking}), "{\"type\":\"ack\",\"cmd_id\":3,\"state\":\"walking\"}\n");
  EXPECT_EQ(encode_response(Err{std::nullopt, ErrCode::frame_too_large}),
            "{\"type\":\"err\",\"cmd_id\":null,\"code\":\"frame_too_large\"}\n");
  for (const Response& r : {Response{Ack{9, Mode::cooldown}}, Response{Err{4, ErrCode::cooldown_active}},
                            Response{Err{std::nullopt, ErrCode::unknown_cmd}}}) {
    EXPECT_EQ(decode_response(encode_response(r)), r);
  }
}

TEST(Codec, Telemetry) {
  const std::string origin = encode_telemetry(TelemetryFrame{});
  EXPECT_NE(origin.find("\"x_cm\":0,"), std::string::npos);
  EXPECT_NE(origin.find("\"mode\":\"idle\""), std::string::npos);
  EXPECT_EQ(origin.rfind("{\"type\":\"telemetry\",", 0), 0u);

  TelemetryFrame f;
  f.v_cm_s = 3.74;
  f.mode = Mode::walking;
  EXPECT_NE(encode_telemetry(f).find("\"v_cm_s\":3.74,"), std::string::npos);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int k = 0; k < 1000; ++k) {
    TelemetryFrame g{std::abs(u(rng)), u(rng), u(rng), u(rng) * 3e-3, u(rng) * 1e-2, u(rng) * 1e-1,
                     u(rng) * 1e-1, Mode::swimming, std::abs(u(rng)) * 1e-3};
    const auto back = decode_telemetry(encode_telemetry(g));
    ASSERT_TRUE(back.has_value());
    for (auto [a, b] : {std::pair{g.t, back->t}, {g.x_cm, back->x_cm}, {g.y_cm, back->y_cm},
                        {g.heading_rad, back->heading_rad}, {g.v_cm_s, back->v_cm_s},
                        {g.front_leg_x_cm, back->front_leg_x_cm}, {g.back_leg_x_cm, back->back_leg_x_cm},
                        {g.thermal_budget, back->thermal_budget}}) {
      EXPECT_LE(std::abs(a - b), 5e-6 * std::abs(a));
    }
    EXPECT_EQ(back->mode, Mode::swimming);
  }
}

TEST(Codec, FormatNumber) {
  EXPECT_EQ(format_number(0.0), "0");
  EXPECT_EQ(format_number(-0.0), "0");
  EXPECT_EQ(format_number(3.74), "3.74");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333");
  EXPECT_EQ(format_number(123456789.0), "1.23457e+08");
}

TEST(Protocol, FuzzNeverCrashes) {
  std::mt19937_64 rng(2718);
  std::uniform_int_distribution<int> byte(0, 255), len(0, 300), pick(0, 3);
  sim::Simulator sim(live_config());
  SessionDecoder session;
  int commands = 0, errors = 0;
  for (int k = 0; k < 10000; ++k) {
    std::string line;
    switch (pick(rng)) {
      case 0: {  // raw bytes
        const int n = len(rng);
        for (int i = 0; i < n; ++i) line.push_back(static_cast<char>(byte(rng)));
        break;
      }
      case 1: {  // a valid command with a few bytes flipped
        line = encode_command(random_command(rng, k));
        std::uniform_int_distribution<std::size_t> at(0, line.size() - 1);
        for (int i = 0; i < 3; ++i) line[at(rng)] = static_cast<char>(byte(rng));
        break;
      }
      case 2: {  // truncated
        line = encode_command(random_command(rng, k));
        line.resize(std::uniform_int_distribution<std::size_t>(0, line.size())(rng));
        break;
      }
      default:  // oversize
        line.assign(4097 + static_cast<std::size_t>(len(rng)), '{');
    }
    std::string_view view = line;
    if (const auto nl = view.find('\n'); nl != std::string_view::npos) view = view.substr(0, nl);
    const auto d = session.accept(view);
    if (!d) continue;
    if (const auto* c = std::get_if<Command>(&*d)) {
      // Decoded commands go through the live state machine too.
      Response r;
      try {
        r = sim.handle(*c);
      } catch (const Error&) {
        r = Err{c->cmd_id, ErrCode::bad_param};
      }
      ++commands;
      EXPECT_TRUE(decode_response(encode_response(r)).has_value());
    } else {
      ++errors;
    }
  }
  EXPECT_GT(errors, 5000);
  std::printf("fuzz: %d decoded commands, %d errors\n", commands, errors);
}

TEST(Protocol, GoldenTranscript) {
  sim::Simulator sim(live_config());
  SessionDecoder session;
  const auto steps = transcript::load();
  ASSERT_FALSE(steps.empty());
  const std::string got = transcript::replay(
      steps,
      [&](const std::string& line) {
        const std::string_view body = std::string_view(line).substr(0, line.size() - 1);
        const auto d = session.accept(body);
        if (!d) return std::string();
        if (const auto* c = std::get_if<Command>(&*d)) return encode_response(sim.handle(*c));
        return encode_response(std::get<Err>(*d));
      },
      [&](double s) { sim.advance(s); });
  EXPECT_EQ(got, transcript::expected(steps));
}
