// Newline-delimited JSON codec shared by the plain socket and the WebSocket.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "inchworm/commands.hpp"

namespace inchworm::proto {

inline constexpr std::size_t kMaxFrameBytes = 4096;

/// One line, newline-terminated.
std::string encode_command(const Command& c);
std::string encode_response(const Response& r);
std::string encode_telemetry(const TelemetryFrame& f);

using Decoded = std::variant<Command, Err>;

/// Total on arbitrary bytes. A trailing "\n" or "\r\n" is ignored.
Decoded decode_command(std::string_view line);
std::optional<Response> decode_response(std::string_view line);
std::optional<TelemetryFrame> decode_telemetry(std::string_view line);

/// Shortest form with at most six significant digits; "-0" prints as "0".
std::string format_number(double v);

/// Per-connection decoder: blank lines are skipped (nullopt) and cmd_id must
/// increase strictly within the session.
class SessionDecoder {
 public:
  std::optional<Decoded> accept(std::string_view line);

 private:
  std::optional<std::int64_t> last_id_;
};

}  // namespace inchworm::proto
