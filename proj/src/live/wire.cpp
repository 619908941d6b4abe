#include "nkfg/live/wire.hpp"

#include <algorithm>

#include "nkfg/error.hpp"

namespace nkfg::live {

void put_u64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) {
    out[i] = static_cast<std::uint8_t>(v & 0xff);
    v >>= 8;
  }
}

std::uint64_t get_u64(const std::uint8_t* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | in[i];
  return v;
}

namespace {

void put_u32(std::uint8_t* out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) {
    out[i] = static_cast<std::uint8_t>(v & 0xff);
    v >>= 8;
  }
}

std::uint32_t get_u32(const std::uint8_t* in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | in[i];
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode(const WireFrame& frame) {
  if (frame.payload.size() > kMaxPayload) throw ValidationError("wire frame payload too large");
  std::vector<std::uint8_t> out(kHeaderSize + frame.payload.size());
  std::copy(kMagic.begin(), kMagic.end(), out.begin());
  out[4] = kWireVersion;
  out[5] = static_cast<std::uint8_t>(frame.kind);
  put_u64(&out[6], frame.seq);
  put_u64(&out[14], frame.send_ts_us);
  put_u32(&out[22], static_cast<std::uint32_t>(frame.payload.size()));
  std::copy(frame.payload.begin(), frame.payload.end(), out.begin() + kHeaderSize);
  return out;
}

Header decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw ParseError("wire frame: truncated header");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) throw ParseError("wire frame: bad magic");
  if (bytes[4] != kWireVersion) {
    throw ParseError("wire frame: unsupported version " + std::to_string(bytes[4]));
  }
  if (bytes[5] > static_cast<std::uint8_t>(FrameKind::plan)) {
    throw ParseError("wire frame: unknown kind " + std::to_string(bytes[5]));
  }
  Header h{static_cast<FrameKind>(bytes[5]), get_u64(&bytes[6]), get_u64(&bytes[14]), get_u32(&bytes[22])};
  if (h.payload_len > kMaxPayload) throw ParseError("wire frame: payload length exceeds limit");
  return h;
}

WireFrame decode(std::span<const std::uint8_t> bytes) {
  const auto h = decode_header(bytes);
  if (bytes.size() != kHeaderSize + h.payload_len) {
    throw ParseError("wire frame: payload_len " + std::to_string(h.payload_len) + " does not match " +
                     std::to_string(bytes.size() - kHeaderSize) + " payload bytes");
  }
  return {h.kind, h.seq, h.send_ts_us, {bytes.begin() + kHeaderSize, bytes.end()}};
}

}  // namespace nkfg::live
