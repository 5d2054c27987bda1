// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#include "tersim/protocol.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include <zlib.h>

#include "tersim/error.hpp"

namespace tersim {

namespace {

constexpr std::uint8_t kMagic0 = 0x54;  // 'T'
constexpr std::uint8_t kMagic1 = 0x52;  // 'R'
constexpr std::size_t kFrameFixed = 14;

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::span<const std::uint8_t> rest() { return in_.subspan(pos_); }

 private:
  std::uint64_t le(int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what) { throw Error(code, "decode: " + what); }

std::size_t payload_size(const Message& m) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, PoseCommand>) return 56;
        else if constexpr (std::is_same_v<T, ForceSample>) return 24;
        else if constexpr (std::is_same_v<T, UsFrameMsg>) return kFrameFixed + v.pixels.size();
        else if constexpr (std::is_same_v<T, Heartbeat>) return 0;
        else if constexpr (std::is_same_v<T, SessionControl>) return 1;
        else return 24;
      },
      m);
}

void write_payload(Writer& w, const Message& m) {
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, PoseCommand>) {
          for (int i = 0; i < 3; ++i) w.f64(v.pose.position[i]);
          const auto& q = v.pose.orientation;
          w.f64(q.w());
          w.f64(q.x());
          w.f64(q.y());
          w.f64(q.z());
        } else if constexpr (std::is_same_v<T, ForceSample>) {
          for (int i = 0; i < 3; ++i) w.f64(v.force[i]);
        } else if constexpr (std::is_same_v<T, UsFrameMsg>) {
          w.u16(v.width);
          w.u16(v.height);
          w.u8(v.pixel_format);
          w.u32(v.frame_id);
          w.u32(v.pixel_spacing_um);
          w.u8(v.frozen ? 1 : 0);
          w.bytes(v.pixels);
        } else if constexpr (std::is_same_v<T, SessionControl>) {
          w.u8(static_cast<std::uint8_t>(v.op));
        } else if constexpr (std::is_same_v<T, StatusReport>) {
          w.u64(v.rx_bytes_per_s);
          w.u64(v.tx_bytes_per_s);
          w.u64(v.rtt_estimate_us);
        }
      },
      m);
}

void expect_len(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    fail(ErrorCode::kCorrupt, std::string(what) + " payload has " + std::to_string(got) +
                                  " bytes, expected " + std::to_string(want));
}

Message read_payload(MessageType type, std::span<const std::uint8_t> payload) {
  Reader r(payload);
  switch (type) {
    case MessageType::kPoseCommand: {
      expect_len(payload.size(), 56, "PoseCommand");
      PoseCommand pc;
      for (int i = 0; i < 3; ++i) pc.pose.position[i] = r.f64();
      const double w = r.f64(), x = r.f64(), y = r.f64(), z = r.f64();
      pc.pose.orientation = Eigen::Quaterniond(w, x, y, z);
      if (!pc.pose.is_finite()) fail(ErrorCode::kCorrupt, "non-finite pose");
      const double n = pc.pose.orientation.norm();
      if (std::abs(n - 1.0) > kQuatRenormTolerance) fail(ErrorCode::kCorrupt, "quaternion is not unit norm");
      if (std::abs(n - 1.0) > 4.0 * std::numeric_limits<double>::epsilon())
        pc.pose.orientation.coeffs() /= n;
      return pc;
    }
    case MessageType::kForceSample: {
      expect_len(payload.size(), 24, "ForceSample");
      ForceSample fs;
      for (int i = 0; i < 3; ++i) fs.force[i] = r.f64();
      if (!fs.force.allFinite()) fail(ErrorCode::kCorrupt, "non-finite force");
      return fs;
    }
    case MessageType::kUsFrame: {
      if (payload.size() < kFrameFixed) fail(ErrorCode::kCorrupt, "UsFrame payload too short");
      UsFrameMsg f;
      f.width = r.u16();
      f.height = r.u16();
      f.pixel_format = r.u8();
      f.frame_id = r.u32();
      f.pixel_spacing_um = r.u32();
      const std::uint8_t frozen = r.u8();
      if (f.pixel_format != 0) fail(ErrorCode::kUnsupported, "pixel format " + std::to_string(f.pixel_format));
      if (frozen > 1) fail(ErrorCode::kCorrupt, "frozen flag must be 0 or 1");
      if (f.pixel_spacing_um == 0) fail(ErrorCode::kCorrupt, "zero pixel spacing");
      f.frozen = frozen == 1;
      const auto pixels = r.rest();
      expect_len(pixels.size(), static_cast<std::size_t>(f.width) * f.height, "UsFrame pixel");
      f.pixels.assign(pixels.begin(), pixels.end());
      return f;
    }
    case MessageType::kHeartbeat:
      expect_len(payload.size(), 0, "Heartbeat");
      return Heartbeat{};
    case MessageType::kSessionControl: {
      expect_len(payload.size(), 1, "SessionControl");
      const std::uint8_t op = r.u8();
      if (op > static_cast<std::uint8_t>(SessionOp::kBye))
        fail(ErrorCode::kUnsupported, "session op " + std::to_string(op));
      return SessionControl{static_cast<SessionOp>(op)};
    }
    case MessageType::kStatusReport: {
      expect_len(payload.size(), 24, "StatusReport");
      StatusReport s;
      s.rx_bytes_per_s = r.u64();
      s.tx_bytes_per_s = r.u64();
      s.rtt_estimate_us = r.u64();
      return s;
    }
  }
  fail(ErrorCode::kUnsupported, "message type " + std::to_string(static_cast<int>(type)));
}

}  // namespace

const char* message_type_name(MessageType t) noexcept {
  switch (t) {
    case MessageType::kPoseCommand: return "PoseCommand";
    case MessageType::kForceSample: return "ForceSample";
    case MessageType::kUsFrame: return "UsFrame";
    case MessageType::kHeartbeat: return "Heartbeat";
    case MessageType::kSessionControl: return "SessionControl";
    case MessageType::kStatusReport: return "StatusReport";
  }
  return "Unknown";
}

const char* session_op_name(SessionOp op) noexcept {
  switch (op) {
    case SessionOp::kHello: return "hello";
    case SessionOp::kStart: return "start";
    case SessionOp::kStop: return "stop";
    case SessionOp::kFreeze: return "freeze";
    case SessionOp::kUnfreeze: return "unfreeze";
    case SessionOp::kBye: return "bye";
  }
  return "unknown";
}

MessageType message_type(const Message& m) noexcept {
  return static_cast<MessageType>(m.index() + 1);
}

std::uint32_t crc32_ieee(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, bytes.size() - off);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode(const Message& m, std::uint32_t seq, std::uint64_t timestamp_us) {
  if (const auto* f = std::get_if<UsFrameMsg>(&m)) {
    if (kFrameFixed + f->pixels.size() > kMaxPayload)
      throw Error(ErrorCode::kOversize, "encode: payload exceeds 16 MiB");
    if (f->pixel_format != 0)
      throw Error(ErrorCode::kInvalidArgument, "encode: only gray8 frames are supported");
    if (f->pixels.size() != static_cast<std::size_t>(f->width) * f->height)
      throw Error(ErrorCode::kInvalidArgument, "encode: pixel buffer does not match width*height");
  }
  const std::size_t len = payload_size(m);
  if (len > kMaxPayload) throw Error(ErrorCode::kOversize, "encode: payload exceeds 16 MiB");

  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + len + kTrailerSize);
  Writer w(out);
  w.u8(kMagic0);
  w.u8(kMagic1);
  w.u8(kProtocolVersion);
  w.u8(static_cast<std::uint8_t>(message_type(m)));
  w.u32(seq);
  w.u64(timestamp_us);
  w.u32(static_cast<std::uint32_t>(len));
  write_payload(w, m);
  w.u32(crc32_ieee(out));
  return out;
}

Envelope decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2) fail(ErrorCode::kTruncated, "buffer shorter than the magic");
  if (bytes[0] != kMagic0 || bytes[1] != kMagic1) fail(ErrorCode::kNotAMessage, "bad magic");
  if (bytes.size() < kHeaderSize) fail(ErrorCode::kTruncated, "buffer shorter than the header");

  Reader r(bytes.subspan(2));
  const std::uint8_t version = r.u8();
  const std::uint8_t type = r.u8();
  Envelope env;
  env.seq = r.u32();
  env.timestamp_us = r.u64();
  const std::uint32_t len = r.u32();
  if (version != kProtocolVersion) fail(ErrorCode::kUnsupported, "version " + std::to_string(version));
  if (len > kMaxPayload) fail(ErrorCode::kCorrupt, "declared payload exceeds 16 MiB");

  const std::size_t total = kHeaderSize + len + kTrailerSize;
  if (bytes.size() < total) fail(ErrorCode::kTruncated, "buffer shorter than the declared payload");
  if (bytes.size() > total) fail(ErrorCode::kCorrupt, "trailing bytes after the CRC");

  const auto body = bytes.first(kHeaderSize + len);
  Reader tail(bytes.subspan(kHeaderSize + len));
  if (crc32_ieee(body) != tail.u32()) fail(ErrorCode::kCorrupt, "CRC mismatch");

  if (type < 1 || type > 6) fail(ErrorCode::kUnsupported, "message type " + std::to_string(type));
  env.body = read_payload(static_cast<MessageType>(type), bytes.subspan(kHeaderSize, len));
  return env;
}

UsFrameMsg to_wire(const UsFrame& f) {
  UsFrameMsg m;
  m.width = static_cast<std::uint16_t>(f.width);
  m.height = static_cast<std::uint16_t>(f.height);
  m.pixel_format = 0;
  m.frame_id = f.frame_id;
  m.pixel_spacing_um = static_cast<std::uint32_t>(std::lround(f.pixel_spacing * 1e6));
  m.frozen = f.frozen;
  m.pixels = f.intensities;
  return m;
}

UsFrame from_wire(const UsFrameMsg& m, const Pose& pose) {
  UsFrame f;
  f.width = m.width;
  f.height = m.height;
  f.pixel_spacing = static_cast<double>(m.pixel_spacing_um) / 1e6;
  f.intensities = m.pixels;
  f.pose = pose;
  f.frame_id = m.frame_id;
  f.frozen = m.frozen;
  return f;
}

// ---- link supervision -------------------------------------------------------------------

const char* link_phase_name(LinkPhase p) noexcept {
  switch (p) {
    case LinkPhase::kIdle: return "Idle";
    case LinkPhase::kHelloSent: return "HelloSent";
    case LinkPhase::kActive: return "Active";
    case LinkPhase::kDegraded: return "Degraded";
    case LinkPhase::kSafeStop: return "SafeStop";
    case LinkPhase::kClosed: return "Closed";
  }
  return "Unknown";
}

LinkState advance_link(const LinkState& s, const LinkEvent& e) {
  LinkState next = s;
  const auto violation = [&]() -> LinkState {
    throw Error(ErrorCode::kProtocolViolation,
                std::string("link: event ") + std::to_string(static_cast<int>(e.kind)) +
                    " is not allowed in state " + link_phase_name(s.state));
  };

  if (e.kind == LinkEventKind::kBye) {
    next.state = LinkPhase::kClosed;
    return next;
  }

  switch (s.state) {
    case LinkPhase::kIdle:
      switch (e.kind) {
        case LinkEventKind::kSendHello: next.state = LinkPhase::kHelloSent; return next;
        case LinkEventKind::kHelloReceived:
          next.state = LinkPhase::kActive;
          next.last_heartbeat_rx = e.now;
          return next;
        case LinkEventKind::kClockTick: return next;
        default: return violation();
      }
    case LinkPhase::kHelloSent:
      switch (e.kind) {
        case LinkEventKind::kSendHello:
        case LinkEventKind::kClockTick:
        case LinkEventKind::kHeartbeatReceived: return next;
        case LinkEventKind::kHelloReceived:
          next.state = LinkPhase::kActive;
          next.last_heartbeat_rx = e.now;
          return next;
        default: return violation();
      }
    case LinkPhase::kActive:
    case LinkPhase::kDegraded:
      switch (e.kind) {
        case LinkEventKind::kHelloReceived:
        case LinkEventKind::kHeartbeatReceived:
          next.state = LinkPhase::kActive;
          next.last_heartbeat_rx = std::max(s.last_heartbeat_rx, e.now);
          return next;
        case LinkEventKind::kClockTick: {
          const SimTime gap = e.now - s.last_heartbeat_rx;
          if (gap > kSafeStopAfter)
            next.state = LinkPhase::kSafeStop;
          else if (gap > kDegradedAfter)
            next.state = LinkPhase::kDegraded;
          return next;
        }
        default: return violation();
      }
    case LinkPhase::kSafeStop:
      switch (e.kind) {
        case LinkEventKind::kSendHello: next.state = LinkPhase::kHelloSent; return next;
        case LinkEventKind::kHelloReceived:
          next.state = LinkPhase::kActive;
          next.last_heartbeat_rx = e.now;
          return next;
        case LinkEventKind::kHeartbeatReceived:
        case LinkEventKind::kClockTick: return next;
        default: return violation();
      }
    case LinkPhase::kClosed:
      if (e.kind == LinkEventKind::kClockTick) return next;
      return violation();
  }
  return violation();
}

Freshness filter_stale(LinkState& s, const Envelope& m) {
  const MessageType t = m.type();
  if (t != MessageType::kPoseCommand && t != MessageType::kForceSample && t != MessageType::kUsFrame)
    return Freshness::kAccept;
  auto& highest = s.highest_seq_rx[static_cast<std::size_t>(t)];
  if (highest && m.seq <= *highest) return Freshness::kDrop;
  highest = m.seq;
  return Freshness::kAccept;
}

}  // namespace tersim
