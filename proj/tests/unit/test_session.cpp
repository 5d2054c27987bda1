// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include <nlohmann/json.hpp>

#include "tersim/error.hpp"
#include "tersim/session.hpp"

using namespace tersim;

namespace {

template <typename T>
std::vector<T> of_type(const std::vector<Message>& msgs) {
  std::vector<T> out;
  for (const auto& m : msgs)
    if (const auto* v = std::get_if<T>(&m)) out.push_back(*v);
  return out;
}

MasterState live_master() {
  MasterState ms;
  ms.link.state = LinkPhase::kActive;
  ms.started = true;
  return ms;
}

SlaveState live_slave(const Pose& p) {
  SlaveState ss;
  ss.link.state = LinkPhase::kActive;
  ss.actual_probe = p;
  ss.commanded_probe = p;
  return ss;
}

Scenario short_scenario() {
  Scenario sc;
  sc.name = "unit";
  sc.phantom = phantom_preset("aaa_54mm");
  sc.seed = 3;
  for (double y : {0.0, 0.02, 0.04}) sc.sweep.push_back({{0.0, y}, 0.0, 10});
  for (std::size_t i = 0; i < 3; ++i) sc.measurements.push_back({i, MeasureKind::kApAorta});
  return sc;
}

}  // namespace

TEST_CASE("zero input still emits the same pose every tick") {
  MasterState ms = live_master();
  const auto a = of_type<PoseCommand>(master_tick(ms, {}, SimTime{10'000}));
  const auto b = of_type<PoseCommand>(master_tick(ms, {}, SimTime{20'000}));
  REQUIRE(a.size() == 1);
  REQUIRE(b.size() == 1);
  CHECK(a[0].pose == b[0].pose);
  CHECK(a[0].pose == home_pose());
}

TEST_CASE("input past the workspace edge is clamped to the boundary") {
  MasterState ms = live_master();
  OperatorInput in;
  in.translation = {0.5, 0.0, 0.0};
  const auto cmds = of_type<PoseCommand>(master_tick(ms, in, SimTime{10'000}));
  REQUIRE(cmds.size() == 1);
  CHECK(cmds[0].pose.position.x() == Workspace{}.half_extents.x());
}

TEST_CASE("heartbeats go out every 100 ms") {
  MasterState ms = live_master();
  int beats = 0;
  for (int t = 0; t < 100; ++t) beats += static_cast<int>(of_type<Heartbeat>(master_tick(ms, {}, SimTime{t * 10'000})).size());
  CHECK(beats == 10);
}

TEST_CASE("forces above the haptic limit are capped before rendering") {
  MasterState ms = live_master();
  master_receive(ms, {1, 0, ForceSample{{0.0, 0.0, 8.0}}}, SimTime{0});
  CHECK(ms.last_rendered_force.z() == doctest::Approx(6.4).epsilon(1e-15));
  CHECK(ms.last_rendered_force.norm() <= 6.4);
  master_receive(ms, {2, 0, ForceSample{{3.0, 4.0, 0.0}}}, SimTime{0});
  CHECK(ms.last_rendered_force == Eigen::Vector3d(3.0, 4.0, 0.0));
  for (double s : {6.4000001, 1e3, 1e300}) CHECK(cap_force({s, s, s}, kForceCap).norm() <= kForceCap);
}

TEST_CASE("master in SafeStop sends only a fresh hello but keeps tracking input") {
  MasterState ms = live_master();
  ms.link.state = LinkPhase::kSafeStop;
  OperatorInput in;
  in.translation = {0.01, 0.0, 0.0};
  const auto out = master_tick(ms, in, SimTime{10'000});
  CHECK(of_type<PoseCommand>(out).empty());
  REQUIRE(of_type<SessionControl>(out).size() == 1);
  CHECK(of_type<SessionControl>(out)[0].op == SessionOp::kHello);
  CHECK(ms.virtual_probe.position.x() == doctest::Approx(0.01));
}

TEST_CASE("contact force follows F = k d") {
  const PhantomConfig ph;
  SlaveState ss = live_slave(make_station_pose(0.0, 0.0, -0.005));
  const auto out = slave_tick(ss, {}, ph, SimTime{10'000});
  const auto forces = of_type<ForceSample>(out);
  REQUIRE(forces.size() == 1);
  CHECK(forces[0].force.x() == 0.0);
  CHECK(forces[0].force.y() == 0.0);
  CHECK(forces[0].force.z() == doctest::Approx(800.0 * 0.005).epsilon(1e-12));
  CHECK(of_type<UsFrameMsg>(out).size() == 1);
}

TEST_CASE("slave reports raw force uncapped") {
  const PhantomConfig ph;
  SlaveState ss = live_slave(make_station_pose(0.0, 0.0, -0.012));
  const auto forces = of_type<ForceSample>(slave_tick(ss, {}, ph, SimTime{10'000}));
  REQUIRE(forces.size() == 1);
  CHECK(forces[0].force.z() == doctest::Approx(9.6).epsilon(1e-12));
}

TEST_CASE("no contact above the skin: zero force and no frames") {
  const PhantomConfig ph;
  SlaveState ss = live_slave(make_station_pose(0.0, 0.0, 0.003));
  const auto out = slave_tick(ss, {}, ph, SimTime{10'000});
  REQUIRE(of_type<ForceSample>(out).size() == 1);
  CHECK(of_type<ForceSample>(out)[0].force.isZero());
  CHECK(of_type<UsFrameMsg>(out).empty());
}

TEST_CASE("heartbeat silence halts the slave and freezes its pose") {
  const PhantomConfig ph;
  SlaveState ss = live_slave(make_station_pose(0.0, 0.0, -0.002));
  ss.commanded_probe = make_station_pose(0.05, 0.0, -0.002);
  Pose at_halt;
  SimTime halted_at{-1};
  for (std::int64_t t = 10'000; t <= 2'000'000; t += 10'000) {
    slave_tick(ss, {}, ph, SimTime{t});
    if (ss.halted && halted_at.count() < 0) {
      halted_at = SimTime{t};
      at_halt = ss.actual_probe;
    }
    if (ss.halted) CHECK(ss.actual_probe == at_halt);
  }
  // Silence began at t = 0; halt must land within 1000 ms + one tick.
  CHECK(halted_at > kSafeStopAfter);
  CHECK(halted_at <= kSafeStopAfter + SimTime{10'000});
  CHECK(ss.link.state == LinkPhase::kSafeStop);

  // Pose commands are ignored until a fresh hello.
  slave_receive(ss, {10, 0, PoseCommand{make_station_pose(-0.05, 0, 0)}}, SimTime{2'010'000});
  slave_tick(ss, {}, ph, SimTime{2'010'000});
  CHECK(ss.actual_probe == at_halt);
  slave_receive(ss, {11, 0, SessionControl{SessionOp::kHello}}, SimTime{2'020'000});
  CHECK_FALSE(ss.halted);
  CHECK(ss.commanded_probe == ss.actual_probe);
}

TEST_CASE("frozen frame is held and unfreeze releases it") {
  const PhantomConfig ph = phantom_preset("aaa_54mm");
  SlaveState ss = live_slave(make_station_pose(0.0, 0.02, -0.002));
  slave_receive(ss, {1, 0, SessionControl{SessionOp::kFreeze}}, SimTime{0});
  auto frames = of_type<UsFrameMsg>(slave_tick(ss, {}, ph, SimTime{10'000}));
  REQUIRE(frames.size() == 1);
  CHECK(frames[0].frozen);
  const auto id = frames[0].frame_id;
  ss.link.last_heartbeat_rx = SimTime{60'000};
  frames = of_type<UsFrameMsg>(slave_tick(ss, {}, ph, SimTime{60'000}));
  REQUIRE(frames.size() == 1);
  CHECK(frames[0].frame_id == id);
  // A stale freeze control arriving after a newer unfreeze is ignored.
  slave_receive(ss, {3, 0, SessionControl{SessionOp::kUnfreeze}}, SimTime{70'000});
  slave_receive(ss, {2, 0, SessionControl{SessionOp::kFreeze}}, SimTime{70'000});
  CHECK_FALSE(ss.freeze_pending);
  CHECK_FALSE(ss.frozen_frame.has_value());
}

TEST_CASE("scenario validation rejects stations outside the workspace") {
  Scenario sc = short_scenario();
  sc.sweep.push_back({{0.0, 0.2}, 0.0, 10});
  CHECK_THROWS_AS(validate(sc), Error);
  sc = short_scenario();
  sc.measurements.push_back({9, MeasureKind::kApAorta});
  CHECK_THROWS_AS(validate(sc), Error);
  sc = short_scenario();
  CHECK_NOTHROW(validate(sc));
}

TEST_CASE("empty scenario performs the handshake only") {
  Scenario sc = short_scenario();
  sc.sweep.clear();
  sc.measurements.clear();
  const auto tr = run_session(sc, channel_preset("vthd"), 1);
  CHECK(tr.completed);
  CHECK(tr.measurements.empty());
  CHECK(tr.captures.empty());
  CHECK(tr.duration == SimTime{0});
  CHECK(tr.handshake_at > SimTime{0});
}

TEST_CASE("sessions are deterministic and respect the safety invariants") {
  const Scenario sc = short_scenario();
  const auto a = run_session(sc, channel_preset("dsl"), 17);
  const auto b = run_session(sc, channel_preset("dsl"), 17);
  std::ostringstream ta, tb;
  write_trace_jsonl(a, ta);
  write_trace_jsonl(b, tb);
  CHECK(ta.str() == tb.str());
  REQUIRE(a.completed);

  const Workspace w;
  std::optional<Pose> halted_pose;
  for (const auto& t : a.ticks) {
    CHECK(t.rendered_force.norm() <= kForceCap);
    CHECK(w.contains(t.slave_probe.position));
    if (t.halted) {
      if (halted_pose) CHECK(t.slave_probe == *halted_pose);
      halted_pose = t.slave_probe;
    } else {
      halted_pose.reset();
    }
  }
}

TEST_CASE("latency changes duration but not measurements") {
  const Scenario sc = short_scenario();
  const auto fast = run_session(sc, channel_preset("vthd"), 5);
  const auto slow = run_session(sc, channel_preset("satellite"), 5);
  REQUIRE(fast.completed);
  REQUIRE(slow.completed);
  REQUIRE(fast.measurements.size() == slow.measurements.size());
  for (std::size_t i = 0; i < fast.measurements.size(); ++i) {
    CHECK(fast.measurements[i].value == slow.measurements[i].value);
    CHECK(fast.measurements[i].thrombus_seen == slow.measurements[i].thrombus_seen);
  }
  CHECK(slow.duration > fast.duration);
}

TEST_CASE("a dead link fails the session without throwing") {
  ChannelParams dead = channel_preset("vthd");
  dead.loss_prob = 1.0;
  const auto tr = run_session(short_scenario(), dead, 1);
  CHECK_FALSE(tr.completed);
  CHECK_FALSE(tr.failure.empty());
}

TEST_CASE("trace lines are JSON objects in time order") {
  const auto tr = run_session(short_scenario(), channel_preset("vthd"), 2);
  std::ostringstream os;
  write_trace_jsonl(tr, os);
  std::istringstream in(os.str());
  std::int64_t last = -1;
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line); ++lines) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("t_us"));
    CHECK(j.contains("event"));
    CHECK(j["t_us"].get<std::int64_t>() >= last);
    last = j["t_us"].get<std::int64_t>();
  }
  CHECK(lines > tr.ticks.size());
}
