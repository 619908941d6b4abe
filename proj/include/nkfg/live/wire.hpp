#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nkfg::live {

enum class FrameKind : std::uint8_t { data = 0, pause = 1, resume = 2, switch_ = 3, plan = 4 };

inline constexpr std::array<std::uint8_t, 4> kMagic{'N', 'K', 'F', 'G'};
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kHeaderSize = 4 + 1 + 1 + 8 + 8 + 4;
inline constexpr std::uint32_t kMaxPayload = 64u << 20;

struct WireFrame {
  FrameKind kind = FrameKind::data;
  std::uint64_t seq = 0;
  std::uint64_t send_ts_us = 0;
  std::vector<std::uint8_t> payload;

  std::string text() const { return {payload.begin(), payload.end()}; }
  static WireFrame with_text(FrameKind kind, std::uint64_t seq, std::uint64_t ts, const std::string& s) {
    return {kind, seq, ts, {s.begin(), s.end()}};
  }

  friend bool operator==(const WireFrame&, const WireFrame&) = default;
};

std::vector<std::uint8_t> encode(const WireFrame& frame);

struct Header {
  FrameKind kind;
  std::uint64_t seq;
  std::uint64_t send_ts_us;
  std::uint32_t payload_len;
};

// Validates the fixed header fields; throws ParseError on mismatch.
Header decode_header(std::span<const std::uint8_t> bytes);

// Decodes one complete frame; `bytes` must hold exactly header + payload.
WireFrame decode(std::span<const std::uint8_t> bytes);

void put_u64(std::uint8_t* out, std::uint64_t v);
std::uint64_t get_u64(const std::uint8_t* in);

}  // namespace nkfg::live
