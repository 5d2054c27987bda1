// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "tersim/kinematics.hpp"
#include "tersim/phantom.hpp"
#include "tersim/time.hpp"

namespace tersim {

// Wire layout (little-endian), see docs/PROTOCOL.md:
//   'T' 'R' | version u8 | type u8 | seq u32 | timestamp_us u64 | payload_len u32 | payload | crc32
enum class MessageType : std::uint8_t {
  kPoseCommand = 1,
  kForceSample = 2,
  kUsFrame = 3,
  kHeartbeat = 4,
  kSessionControl = 5,
  kStatusReport = 6,
};

const char* message_type_name(MessageType t) noexcept;

struct PoseCommand {
  Pose pose;
  bool operator==(const PoseCommand&) const = default;
};

struct ForceSample {
  Eigen::Vector3d force = Eigen::Vector3d::Zero();
  bool operator==(const ForceSample& o) const { return force == o.force; }
};

struct UsFrameMsg {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint8_t pixel_format = 0;  // 0 = gray8
  std::uint32_t frame_id = 0;
  std::uint32_t pixel_spacing_um = 0;
  bool frozen = false;
  std::vector<std::uint8_t> pixels;
  bool operator==(const UsFrameMsg&) const = default;
};

struct Heartbeat {
  bool operator==(const Heartbeat&) const = default;
};

enum class SessionOp : std::uint8_t {
  kHello = 0,
  kStart = 1,
  kStop = 2,
  kFreeze = 3,
  kUnfreeze = 4,
  kBye = 5,
};

const char* session_op_name(SessionOp op) noexcept;

struct SessionControl {
  SessionOp op = SessionOp::kHello;
  bool operator==(const SessionControl&) const = default;
};

struct StatusReport {
  std::uint64_t rx_bytes_per_s = 0;
  std::uint64_t tx_bytes_per_s = 0;
  std::uint64_t rtt_estimate_us = 0;
  bool operator==(const StatusReport&) const = default;
};

using Message =
    std::variant<PoseCommand, ForceSample, UsFrameMsg, Heartbeat, SessionControl, StatusReport>;

MessageType message_type(const Message& m) noexcept;

struct Envelope {
  std::uint32_t seq = 0;
  std::uint64_t timestamp_us = 0;
  Message body;

  MessageType type() const noexcept { return message_type(body); }
  bool operator==(const Envelope&) const = default;
};

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kHeaderSize = 20;
inline constexpr std::size_t kTrailerSize = 4;
inline constexpr std::size_t kMaxPayload = 16u * 1024u * 1024u;
inline constexpr double kQuatRenormTolerance = 1e-6;

std::uint32_t crc32_ieee(std::span<const std::uint8_t> bytes);

// Throws Error(kOversize) for payloads above 16 MiB and Error(kInvalidArgument) for frames
// whose pixel buffer does not match width * height.
std::vector<std::uint8_t> encode(const Message& m, std::uint32_t seq, std::uint64_t timestamp_us);

// Exact inverse of encode. Throws Error with one of kNotAMessage, kCorrupt, kUnsupported,
// kTruncated.
Envelope decode(std::span<const std::uint8_t> bytes);

UsFrameMsg to_wire(const UsFrame& f);
UsFrame from_wire(const UsFrameMsg& m, const Pose& pose);

// ---- link supervision -------------------------------------------------------------------

enum class LinkPhase : std::uint8_t { kIdle, kHelloSent, kActive, kDegraded, kSafeStop, kClosed };

const char* link_phase_name(LinkPhase p) noexcept;

inline constexpr SimTime kHeartbeatPeriod{100'000};
inline constexpr SimTime kDegradedAfter{250'000};
inline constexpr SimTime kSafeStopAfter{1'000'000};

struct LinkState {
  LinkPhase state = LinkPhase::kIdle;
  SimTime last_heartbeat_rx{0};
  // Indexed by MessageType value.
  std::array<std::optional<std::uint32_t>, 7> highest_seq_rx{};

  bool live() const { return state == LinkPhase::kActive || state == LinkPhase::kDegraded; }
};

enum class LinkEventKind : std::uint8_t {
  kSendHello,
  kHelloReceived,
  kHeartbeatReceived,
  kClockTick,
  kBye,
};

struct LinkEvent {
  LinkEventKind kind;
  SimTime now;
};

// Throws Error(kProtocolViolation) for (state, event) pairs outside the transition graph.
LinkState advance_link(const LinkState& s, const LinkEvent& e);

enum class Freshness : std::uint8_t { kAccept, kDrop };

// Latest-wins filter for pose commands, force samples and frames; updates `s` on accept.
Freshness filter_stale(LinkState& s, const Envelope& m);

}  // namespace tersim
