// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <map>
#include <queue>
#include <random>
#include <set>

#include "tersim/error.hpp"
#include "tersim/protocol.hpp"
#include "random_message.hpp"

using namespace tersim;

namespace {

// Reflected CRC-32 (poly 0xEDB88320), one bit at a time.
std::uint32_t bitwise_crc32(const std::vector<std::uint8_t>& data) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::uint8_t byte : data) {
    crc ^= byte;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

struct Builder {
  std::vector<std::uint8_t> b;
  Builder& u8(std::uint8_t v) {
    b.push_back(v);
    return *this;
  }
  Builder& le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    return *this;
  }
  Builder& f64(double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    return le(bits, 8);
  }
};

std::vector<std::uint8_t> frame_bytes(std::uint8_t type, std::uint32_t seq, std::uint64_t ts,
                                      const std::vector<std::uint8_t>& payload) {
  Builder h;
  h.u8('T').u8('R').u8(1).u8(type).le(seq, 4).le(ts, 8).le(payload.size(), 4);
  h.b.insert(h.b.end(), payload.begin(), payload.end());
  const std::uint32_t crc = bitwise_crc32(h.b);
  h.le(crc, 4);
  return h.b;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInternal;
}

}  // namespace

TEST_CASE("zlib CRC agrees with the bitwise reference") {
  std::mt19937_64 rng(1);
  for (std::size_t n : {0, 1, 7, 64, 1000}) {
    std::vector<std::uint8_t> v(n);
    for (auto& x : v) x = static_cast<std::uint8_t>(rng());
    CHECK(crc32_ieee(v) == bitwise_crc32(v));
  }
  const std::string check = "123456789";
  CHECK(crc32_ieee({reinterpret_cast<const std::uint8_t*>(check.data()), check.size()}) == 0xCBF43926u);
}

TEST_CASE("heartbeat encodes to the reference 24 bytes") {
  const auto bytes = encode(Heartbeat{}, 0, 0);
  REQUIRE(bytes.size() == 24);
  const std::vector<std::uint8_t> head{0x54, 0x52, 0x01, 0x04, 0x00, 0x00, 0x00, 0x00};
  CHECK(std::equal(head.begin(), head.end(), bytes.begin()));
  CHECK(bytes == frame_bytes(4, 0, 0, {}));
  const Envelope env = decode(frame_bytes(4, 0, 0, {}));
  CHECK(env.type() == MessageType::kHeartbeat);
}

TEST_CASE("every message type matches the byte builder") {
  Pose p;
  p.position = {0.01, -0.02, 0.003};
  p.orientation = Eigen::Quaterniond(0.5, 0.5, 0.5, 0.5);
  Builder pose;
  pose.f64(0.01).f64(-0.02).f64(0.003).f64(0.5).f64(0.5).f64(0.5).f64(0.5);
  CHECK(encode(PoseCommand{p}, 9, 123456789012ull) == frame_bytes(1, 9, 123456789012ull, pose.b));

  Builder force;
  force.f64(0).f64(0).f64(4.0);
  CHECK(encode(ForceSample{{0, 0, 4.0}}, 2, 3) == frame_bytes(2, 2, 3, force.b));

  UsFrameMsg f{2, 1, 0, 77, 500, true, {10, 20}};
  Builder frame;
  frame.le(2, 2).le(1, 2).u8(0).le(77, 4).le(500, 4).u8(1).u8(10).u8(20);
  CHECK(encode(f, 5, 6) == frame_bytes(3, 5, 6, frame.b));

  CHECK(encode(SessionControl{SessionOp::kFreeze}, 1, 1) == frame_bytes(5, 1, 1, {3}));

  Builder st;
  st.le(100, 8).le(200, 8).le(300, 8);
  CHECK(encode(StatusReport{100, 200, 300}, 4, 8) == frame_bytes(6, 4, 8, st.b));
}

TEST_CASE("decode error classes") {
  const auto hb = encode(Heartbeat{}, 1, 2);
  CHECK(code_of([] { decode({}); }) == ErrorCode::kTruncated);
  auto bad_magic = hb;
  bad_magic[0] = 'X';
  CHECK(code_of([&] { decode(bad_magic); }) == ErrorCode::kNotAMessage);
  auto bad_version = frame_bytes(4, 0, 0, {});
  bad_version[2] = 2;
  CHECK(code_of([&] { decode(bad_version); }) == ErrorCode::kUnsupported);
  CHECK(code_of([&] { decode(frame_bytes(9, 0, 0, {})); }) == ErrorCode::kUnsupported);
  CHECK(code_of([&] { decode(std::span(hb).first(23)); }) == ErrorCode::kTruncated);
  auto trailing = hb;
  trailing.push_back(0);
  CHECK(code_of([&] { decode(trailing); }) == ErrorCode::kCorrupt);
  CHECK(code_of([&] { decode(frame_bytes(5, 0, 0, {6})); }) == ErrorCode::kUnsupported);
}

TEST_CASE("pixel count that disagrees with gray8 dimensions is rejected") {
  Builder payload;
  payload.le(300, 2).le(300, 2).u8(0).le(1, 4).le(500, 4).u8(0);
  payload.b.resize(payload.b.size() + 300 * 300 * 2, 0x11);
  CHECK(code_of([&] { decode(frame_bytes(3, 0, 0, payload.b)); }) == ErrorCode::kCorrupt);
  UsFrameMsg f{300, 300, 0, 1, 500, false, std::vector<std::uint8_t>(300 * 300 * 2)};
  CHECK(code_of([&] { encode(f, 0, 0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("oversize payloads are refused") {
  UsFrameMsg f{4096, 4097, 0, 1, 500, false, std::vector<std::uint8_t>(4096u * 4097u)};
  CHECK(code_of([&] { encode(f, 0, 0); }) == ErrorCode::kOversize);
  Builder big;
  big.u8('T').u8('R').u8(1).u8(3).le(0, 4).le(0, 8).le(kMaxPayload + 1, 4);
  CHECK(code_of([&] { decode(big.b); }) == ErrorCode::kCorrupt);
}

TEST_CASE("pose quaternions are renormalized or rejected") {
  Builder near;
  near.f64(0).f64(0).f64(0).f64(1.0 + 5e-7).f64(0).f64(0).f64(0);
  const auto env = decode(frame_bytes(1, 0, 0, near.b));
  CHECK(std::get<PoseCommand>(env.body).pose.orientation.norm() == doctest::Approx(1.0).epsilon(1e-15));
  Builder far;
  far.f64(0).f64(0).f64(0).f64(1.01).f64(0).f64(0).f64(0);
  CHECK(code_of([&] { decode(frame_bytes(1, 0, 0, far.b)); }) == ErrorCode::kCorrupt);
  Builder nan;
  nan.f64(0).f64(0).f64(std::nan("")).f64(1).f64(0).f64(0).f64(0);
  CHECK(code_of([&] { decode(frame_bytes(1, 0, 0, nan.b)); }) == ErrorCode::kCorrupt);
  Builder inf;
  inf.f64(0).f64(HUGE_VAL).f64(0);
  CHECK(code_of([&] { decode(frame_bytes(2, 0, 0, inf.b)); }) == ErrorCode::kCorrupt);
}

TEST_CASE("roundtrip fuzz and bit-flip rejection") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 20000; ++i) {
    const Message m = tersim::testing::random_message(rng);
    const auto seq = static_cast<std::uint32_t>(rng());
    const std::uint64_t ts = rng();
    const auto bytes = encode(m, seq, ts);
    const Envelope env = decode(bytes);
    REQUIRE(env == Envelope{seq, ts, m});
    auto flipped = bytes;
    const auto bit = rng() % (flipped.size() * 8);
    flipped[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    REQUIRE_THROWS_AS(decode(flipped), Error);
    if (bit / 8 >= kHeaderSize) CHECK(code_of([&] { decode(flipped); }) == ErrorCode::kCorrupt);
  }
}

TEST_CASE("random bytes only ever raise typed errors") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20000; ++i) {
    std::vector<std::uint8_t> v(rng() % 64);
    for (auto& x : v) x = static_cast<std::uint8_t>(rng());
    if (v.size() >= 2 && (rng() & 1)) {
      v[0] = 'T';
      v[1] = 'R';
    }
    try {
      decode(v);
    } catch (const Error&) {
    }
  }
}

TEST_CASE("link thresholds on a simulated clock") {
  LinkState s;
  s = advance_link(s, {LinkEventKind::kSendHello, SimTime{0}});
  CHECK(s.state == LinkPhase::kHelloSent);
  s = advance_link(s, {LinkEventKind::kHelloReceived, SimTime{10'000}});
  CHECK(s.state == LinkPhase::kActive);
  s = advance_link(s, {LinkEventKind::kHeartbeatReceived, SimTime{50'000}});
  CHECK(s.state == LinkPhase::kActive);
  CHECK(s.last_heartbeat_rx == SimTime{50'000});
  CHECK(advance_link(s, {LinkEventKind::kClockTick, SimTime{300'000}}).state == LinkPhase::kActive);
  s = advance_link(s, {LinkEventKind::kClockTick, SimTime{350'000}});
  CHECK(s.state == LinkPhase::kDegraded);
  CHECK(advance_link(s, {LinkEventKind::kHeartbeatReceived, SimTime{400'000}}).state == LinkPhase::kActive);
  CHECK(advance_link(s, {LinkEventKind::kClockTick, SimTime{1'050'000}}).state == LinkPhase::kDegraded);
  s = advance_link(s, {LinkEventKind::kClockTick, SimTime{1'250'000}});
  CHECK(s.state == LinkPhase::kSafeStop);
  CHECK(advance_link(s, {LinkEventKind::kHeartbeatReceived, SimTime{1'300'000}}).state == LinkPhase::kSafeStop);
  CHECK(advance_link(s, {LinkEventKind::kHelloReceived, SimTime{1'300'000}}).state == LinkPhase::kActive);
  CHECK(advance_link(s, {LinkEventKind::kBye, SimTime{1'300'000}}).state == LinkPhase::kClosed);
}

TEST_CASE("link transitions stay on the defined graph") {
  using P = LinkPhase;
  const std::set<std::pair<P, P>> edges{
      {P::kIdle, P::kHelloSent},     {P::kIdle, P::kActive},         {P::kHelloSent, P::kActive},
      {P::kActive, P::kDegraded},    {P::kActive, P::kSafeStop},     {P::kDegraded, P::kActive},
      {P::kDegraded, P::kSafeStop},  {P::kSafeStop, P::kHelloSent},  {P::kSafeStop, P::kActive},
      {P::kIdle, P::kClosed},        {P::kHelloSent, P::kClosed},    {P::kActive, P::kClosed},
      {P::kDegraded, P::kClosed},    {P::kSafeStop, P::kClosed},     {P::kClosed, P::kClosed}};
  const std::vector<LinkEventKind> kinds{LinkEventKind::kSendHello, LinkEventKind::kHelloReceived,
                                         LinkEventKind::kHeartbeatReceived, LinkEventKind::kClockTick,
                                         LinkEventKind::kBye};
  const std::vector<std::int64_t> steps{0, 100'000, 260'000, 1'100'000};

  // Breadth-first exploration over (phase, time since last heartbeat) abstracted to the steps.
  std::set<std::pair<P, std::int64_t>> seen;
  std::queue<LinkState> todo;
  todo.push(LinkState{});
  std::set<P> reached;
  int violations = 0;
  while (!todo.empty()) {
    const LinkState s = todo.front();
    todo.pop();
    const std::int64_t now = s.last_heartbeat_rx.count();
    reached.insert(s.state);
    for (auto k : kinds) {
      for (auto dt : steps) {
        LinkState n;
        try {
          n = advance_link(s, {k, SimTime{now + dt}});
        } catch (const Error& e) {
          CHECK(e.code() == ErrorCode::kProtocolViolation);
          ++violations;
          continue;
        }
        if (n.state != s.state) CHECK(edges.count({s.state, n.state}) == 1);
        if (s.state == P::kSafeStop && n.state == P::kActive) CHECK(k == LinkEventKind::kHelloReceived);
        CHECK(n.last_heartbeat_rx >= s.last_heartbeat_rx);
        // Re-base time so the explored space stays finite.
        const std::int64_t gap = now + dt - n.last_heartbeat_rx.count();
        LinkState rebased = n;
        rebased.last_heartbeat_rx = SimTime{0};
        if (seen.insert({n.state, gap > 0 ? dt : 0}).second) todo.push(rebased);
      }
    }
  }
  CHECK(reached.size() == 6);
  CHECK(violations > 0);
}

TEST_CASE("undefined link events are violations") {
  LinkState s;
  CHECK(code_of([&] { advance_link(s, {LinkEventKind::kHeartbeatReceived, SimTime{0}}); }) ==
        ErrorCode::kProtocolViolation);
  s.state = LinkPhase::kClosed;
  CHECK(code_of([&] { advance_link(s, {LinkEventKind::kSendHello, SimTime{0}}); }) == ErrorCode::kProtocolViolation);
}

TEST_CASE("freshness filter") {
  LinkState s;
  const auto pose = [](std::uint32_t seq) { return Envelope{seq, 0, PoseCommand{}}; };
  CHECK(filter_stale(s, pose(7)) == Freshness::kAccept);
  CHECK(filter_stale(s, pose(5)) == Freshness::kDrop);
  CHECK(filter_stale(s, pose(7)) == Freshness::kDrop);
  CHECK(filter_stale(s, pose(8)) == Freshness::kAccept);
  CHECK(filter_stale(s, Envelope{1, 0, ForceSample{}}) == Freshness::kAccept);
  CHECK(filter_stale(s, Envelope{1, 0, Heartbeat{}}) == Freshness::kAccept);
  CHECK(filter_stale(s, Envelope{1, 0, Heartbeat{}}) == Freshness::kAccept);
  CHECK(filter_stale(s, Envelope{0, 0, SessionControl{}}) == Freshness::kAccept);
  CHECK(*s.highest_seq_rx[static_cast<std::size_t>(MessageType::kPoseCommand)] == 8);
}

TEST_CASE("frame wire conversion keeps pixels and spacing") {
  UsFrame f;
  f.width = 3;
  f.height = 2;
  f.pixel_spacing = 0.0005;
  f.intensities = {1, 2, 3, 4, 5, 6};
  f.frame_id = 12;
  f.frozen = true;
  const UsFrameMsg m = to_wire(f);
  CHECK(m.pixel_spacing_um == 500);
  const UsFrame back = from_wire(std::get<UsFrameMsg>(decode(encode(m, 0, 0)).body), f.pose);
  CHECK(back.intensities == f.intensities);
  CHECK(back.pixel_spacing == f.pixel_spacing);
  CHECK(back.frozen);
  CHECK(back.frame_id == 12);
}
