#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "nkfg/live/net.hpp"

namespace nkfg::live {

// Command-line settings of one role process. The coordinator also reads
// the experiment config (from --config or NEUKONFIG_CONFIG).
struct RoleArgs {
  std::string name;  // device, edge, cloud, coordinator
  std::uint16_t port = 0;
  std::uint16_t edge_port = 0;
  std::uint16_t cloud_port = 0;
  std::uint16_t device_port = 0;
  double fps = 0.0;
  std::size_t queue_capacity = 1;
  std::size_t payload_bytes = 1000;
  std::filesystem::path config;
};

// Runs a role until shutdown; returns the process exit code. Prints
// "READY <port>" on stdout once the role accepts connections.
int run_role(const RoleArgs& args);

// Control messages are JSON objects in the payload of a WireFrame.
FrameKind kind_for_op(const std::string& op);
nlohmann::json parse_message(const WireFrame& frame);

inline constexpr Micros kHeartbeatPeriod{200'000};
inline constexpr Micros kAckTimeout{3'000'000};
inline constexpr Micros kHandshakeTimeout{5'000'000};

}  // namespace nkfg::live
