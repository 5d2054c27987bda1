// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#include "tersim/session.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "tersim/error.hpp"
#include "tersim/util.hpp"

namespace tersim {

namespace {

using nlohmann::json;

constexpr SimTime kResendPeriod{250'000};
constexpr SimTime kDrainLimit{2'000'000};
constexpr double kOperatorSpeed = 0.1;  // m/s, mock-up motion while moving between stations
constexpr double kOperatorTurnRate = 1.0;  // rad/s
constexpr double kArrivalTolerance = 1e-9;

void link_event(LinkState& link, LinkEventKind kind, SimTime now) { link = advance_link(link, {kind, now}); }

json pose_json(const Pose& p) {
  const auto& q = p.orientation;
  return {{"position", {p.position.x(), p.position.y(), p.position.z()}},
          {"orientation", {q.w(), q.x(), q.y(), q.z()}}};
}

json vec_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

class ScriptedOperator {
 public:
  ScriptedOperator(const Scenario& sc, const SessionConfig& cfg) : sc_(sc), cfg_(cfg) {}

  OperatorInput step(const MasterState& ms, SimTime now, SessionTrace& trace) {
    OperatorInput in;
    switch (phase_) {
      case Phase::kHandshake:
        if (ms.link.live()) {
          trace.handshake_at = now;
          note(trace, now, "handshake", "link active");
          begin_station(0, now);
        } else if (now - phase_start_ > kPhaseTimeout) {
          fail(trace, now, "handshake did not complete");
        }
        break;

      case Phase::kMove: {
        const Pose& v = ms.virtual_probe;
        if ((target_.position - v.position).norm() <= kArrivalTolerance &&
            v.orientation.angularDistance(target_.orientation) <= kArrivalTolerance) {
          phase_ = Phase::kDwell;
          dwell_left_ = sc_.sweep[station_].dwell_ticks;
          break;
        }
        const double dt = to_seconds(cfg_.tick);
        const Pose next = step_toward(v, target_, dt, kOperatorSpeed, kOperatorTurnRate,
                                      cfg_.workspace, cfg_.limits);
        in.translation = next.position - v.position;
        in.rotation = next.orientation * v.orientation.conjugate();
        // A previous station's frozen image is still on screen: ask again.
        if (ms.frame_buffer && ms.frame_buffer->frozen && now - last_unfreeze_ >= kResendPeriod) {
          in.unfreeze = true;
          last_unfreeze_ = now;
        }
        break;
      }

      case Phase::kDwell:
        if (dwell_left_ > 0) {
          --dwell_left_;
        } else {
          in.freeze = true;
          last_freeze_ = now;
          phase_start_ = now;
          phase_ = Phase::kAwaitFrozen;
        }
        break;

      case Phase::kAwaitFrozen:
        if (ms.frame_buffer && ms.frame_buffer->frozen &&
            (!last_captured_id_ || ms.frame_buffer->frame_id > *last_captured_id_)) {
          capture(*ms.frame_buffer, now, trace);
          in.unfreeze = true;
          last_unfreeze_ = now;
          begin_station(station_ + 1, now);
        } else if (now - phase_start_ > kPhaseTimeout) {
          fail(trace, now, "no frozen frame for station " + std::to_string(station_));
        } else if (now - last_freeze_ >= kResendPeriod) {
          in.freeze = true;
          last_freeze_ = now;
        }
        break;

      case Phase::kFinish:
        in.end_session = true;
        phase_ = Phase::kDone;
        break;

      case Phase::kDone:
      case Phase::kFailed:
        break;
    }
    return in;
  }

  bool finished() const { return phase_ == Phase::kDone || phase_ == Phase::kFailed; }
  bool failed() const { return phase_ == Phase::kFailed; }

 private:
  enum class Phase { kHandshake, kMove, kDwell, kAwaitFrozen, kFinish, kDone, kFailed };

  void begin_station(std::size_t index, SimTime now) {
    station_ = index;
    phase_start_ = now;
    if (station_ >= sc_.sweep.size()) {
      phase_ = Phase::kFinish;
      return;
    }
    target_ = station_pose(sc_.sweep[station_], sc_.contact_depth, cfg_);
    phase_ = Phase::kMove;
  }

  void capture(const UsFrame& frame, SimTime now, SessionTrace& trace) {
    last_captured_id_ = frame.frame_id;
    StationCapture cap;
    cap.station_index = station_;
    cap.captured_at = now;
    cap.frame = frame;
    try {
      cap.reading = read_vessel(frame);
    } catch (const Error& e) {
      cap.error = e.what();
    }
    for (const auto& req : sc_.measurements) {
      if (req.station_index != station_ || !cap.reading) continue;
      trace.measurements.push_back({station_, req.measure, cap.reading->ap_diameter, cap.reading->thrombus_seen});
      trace.duration = now;
      note(trace, now, "measurement",
           std::string(measure_kind_name(req.measure)) + " station " + std::to_string(station_) + " = " +
               format_double(cap.reading->ap_diameter) + " m");
    }
    note(trace, now, "capture",
         "station " + std::to_string(station_) + " frame " + std::to_string(frame.frame_id) +
             (cap.error.empty() ? "" : " (" + cap.error + ")"));
    trace.captures.push_back(std::move(cap));
  }

  void fail(SessionTrace& trace, SimTime now, const std::string& why) {
    phase_ = Phase::kFailed;
    trace.failure = why;
    note(trace, now, "failure", why);
  }

  static void note(SessionTrace& trace, SimTime now, const char* type, const std::string& summary) {
    trace.events.push_back({now, "operator", type, summary});
  }

  const Scenario& sc_;
  const SessionConfig& cfg_;
  Phase phase_ = Phase::kHandshake;
  std::size_t station_ = 0;
  int dwell_left_ = 0;
  Pose target_;
  SimTime phase_start_{0};
  SimTime last_freeze_{0};
  SimTime last_unfreeze_{-kResendPeriod};
  std::optional<std::uint32_t> last_captured_id_;
};

}  // namespace

Pose home_pose() { return make_station_pose(0.0, 0.0, 0.003); }

Eigen::Vector3d cap_force(const Eigen::Vector3d& f, double cap) {
  const double n = f.norm();
  if (n <= cap) return f;
  Eigen::Vector3d out = f * (cap / n);
  while (out.norm() > cap) out *= 1.0 - 1e-15;
  return out;
}

const char* measure_kind_name(MeasureKind k) noexcept {
  switch (k) {
    case MeasureKind::kApAorta: return "ap_aorta";
    case MeasureKind::kApIliacLeft: return "ap_iliac_left";
    case MeasureKind::kApIliacRight: return "ap_iliac_right";
  }
  return "unknown";
}

// ---- master -----------------------------------------------------------------------------

std::vector<Message> master_tick(MasterState& ms, const OperatorInput& input, SimTime now,
                                 const SessionConfig& cfg) {
  std::vector<Message> out;
  link_event(ms.link, LinkEventKind::kClockTick, now);

  Pose moved = ms.virtual_probe;
  moved.position += input.translation;
  moved.orientation = (input.rotation * moved.orientation).normalized();
  ms.virtual_probe = clamp_to_workspace(moved, cfg.workspace, cfg.limits);

  if (ms.link.state == LinkPhase::kClosed) return out;

  if (input.end_session && ms.link.live()) {
    out.push_back(SessionControl{SessionOp::kStop});
    out.push_back(SessionControl{SessionOp::kBye});
    link_event(ms.link, LinkEventKind::kBye, now);
    return out;
  }

  const bool may_hello = ms.link.state == LinkPhase::kIdle || ms.link.state == LinkPhase::kSafeStop ||
                         (ms.link.state == LinkPhase::kHelloSent && now >= ms.next_hello);
  if (may_hello) {
    link_event(ms.link, LinkEventKind::kSendHello, now);
    out.push_back(SessionControl{SessionOp::kHello});
    ms.next_hello = now + kHelloRetry;
    return out;
  }
  if (!ms.link.live()) return out;

  if (!ms.started) {
    out.push_back(SessionControl{SessionOp::kStart});
    ms.started = true;
  }
  out.push_back(PoseCommand{ms.virtual_probe});
  if (now >= ms.next_heartbeat) {
    out.push_back(Heartbeat{});
    ms.next_heartbeat = now + kHeartbeatPeriod;
  }
  if (input.freeze) {
    out.push_back(SessionControl{SessionOp::kFreeze});
    ms.frozen = true;
  }
  if (input.unfreeze) {
    out.push_back(SessionControl{SessionOp::kUnfreeze});
    ms.frozen = false;
  }
  return out;
}

void master_receive(MasterState& ms, const Envelope& env, SimTime now, const SessionConfig& cfg) {
  if (ms.link.state == LinkPhase::kClosed) return;
  if (filter_stale(ms.link, env) == Freshness::kDrop) return;

  if (const auto* fs = std::get_if<ForceSample>(&env.body)) {
    ms.last_rendered_force = cap_force(fs->force, cfg.force_cap);
  } else if (const auto* fm = std::get_if<UsFrameMsg>(&env.body)) {
    ms.frame_buffer = from_wire(*fm, ms.virtual_probe);
  } else if (std::holds_alternative<Heartbeat>(env.body)) {
    link_event(ms.link, LinkEventKind::kHeartbeatReceived, now);
  } else if (const auto* sc = std::get_if<SessionControl>(&env.body)) {
    if (sc->op == SessionOp::kHello) link_event(ms.link, LinkEventKind::kHelloReceived, now);
    else if (sc->op == SessionOp::kBye) link_event(ms.link, LinkEventKind::kBye, now);
  } else if (const auto* st = std::get_if<StatusReport>(&env.body)) {
    ms.last_status = *st;
  }
}

// ---- slave ------------------------------------------------------------------------------

void slave_receive(SlaveState& ss, const Envelope& env, SimTime now, const SessionConfig& cfg) {
  if (ss.link.state == LinkPhase::kClosed) return;
  if (filter_stale(ss.link, env) == Freshness::kDrop) return;

  if (const auto* pc = std::get_if<PoseCommand>(&env.body)) {
    if (ss.link.live() && !ss.halted) ss.commanded_probe = clamp_to_workspace(pc->pose, cfg.workspace, cfg.limits);
    const auto one_way = now.count() - static_cast<std::int64_t>(env.timestamp_us);
    if (one_way >= 0) {
      const auto sample = static_cast<std::uint64_t>(2 * one_way);
      ss.rtt_estimate_us = ss.rtt_estimate_us == 0 ? sample : (7 * ss.rtt_estimate_us + sample) / 8;
    }
  } else if (std::holds_alternative<Heartbeat>(env.body)) {
    link_event(ss.link, LinkEventKind::kHeartbeatReceived, now);
  } else if (const auto* sc = std::get_if<SessionControl>(&env.body)) {
    switch (sc->op) {
      case SessionOp::kHello:
        link_event(ss.link, LinkEventKind::kHelloReceived, now);
        if (ss.halted) {
          ss.halted = false;
          ss.commanded_probe = ss.actual_probe;
        }
        ss.hello_reply_pending = true;
        break;
      case SessionOp::kBye:
        link_event(ss.link, LinkEventKind::kBye, now);
        ss.halted = true;
        break;
      case SessionOp::kStop:
        ss.commanded_probe = ss.actual_probe;
        break;
      case SessionOp::kStart:
        break;
      case SessionOp::kFreeze:
      case SessionOp::kUnfreeze:
        // Freeze and unfreeze obey the sender's order; a late duplicate must not undo a newer request.
        if (ss.last_freeze_ctl_seq && env.seq <= *ss.last_freeze_ctl_seq) break;
        ss.last_freeze_ctl_seq = env.seq;
        if (sc->op == SessionOp::kFreeze) {
          if (!ss.frozen_frame) ss.freeze_pending = true;
        } else {
          ss.frozen_frame.reset();
          ss.freeze_pending = false;
        }
        break;
    }
  }
}

std::vector<Message> slave_tick(SlaveState& ss, const SessionConfig& cfg, const PhantomConfig& phantom,
                                SimTime now) {
  std::vector<Message> out;
  link_event(ss.link, LinkEventKind::kClockTick, now);
  if (ss.link.state == LinkPhase::kSafeStop || ss.link.state == LinkPhase::kClosed) ss.halted = true;

  if (ss.hello_reply_pending && ss.link.live()) out.push_back(SessionControl{SessionOp::kHello});
  ss.hello_reply_pending = false;

  if (!ss.halted)
    ss.actual_probe = step_toward(ss.actual_probe, ss.commanded_probe, to_seconds(cfg.tick), cfg.v_max,
                                  cfg.w_max, cfg.workspace, cfg.limits);
  ss.cables = inverse_kinematics(ss.actual_probe.position.head<2>(), cfg.rig);

  const double penetration = surface_height(phantom, ss.actual_probe.position.head<2>()) -
                             ss.actual_probe.position.z();
  ss.in_contact = penetration >= 0.0;
  ss.contact_force = {0.0, 0.0, phantom.stiffness * std::max(0.0, penetration)};

  if (!ss.link.live()) return out;

  out.push_back(ForceSample{ss.contact_force});
  if (now >= ss.next_heartbeat) {
    out.push_back(Heartbeat{});
    ss.next_heartbeat = now + kHeartbeatPeriod;
  }
  if (now >= ss.next_status) {
    out.push_back(StatusReport{ss.rx_bytes_per_s, ss.tx_bytes_per_s, ss.rtt_estimate_us});
    ss.next_status = now + cfg.status_period;
  }
  if (ss.in_contact && now >= ss.next_frame) {
    ss.next_frame = now + cfg.frame_period;
    if (ss.frozen_frame) {
      out.push_back(to_wire(*ss.frozen_frame));
    } else {
      UsFrame f = render_frame(phantom, ss.actual_probe, ss.next_frame_id++);
      if (ss.freeze_pending && ss.actual_probe == ss.commanded_probe) {
        f.frozen = true;
        ss.freeze_pending = false;
        ss.frozen_frame = f;
      }
      out.push_back(to_wire(f));
    }
  }
  return out;
}

// ---- scripted exam ----------------------------------------------------------------------

Pose station_pose(const Station& st, double contact_depth, const SessionConfig& cfg) {
  return clamp_to_workspace(make_station_pose(st.xy.x(), st.xy.y(), -contact_depth, st.tilt),
                            cfg.workspace, cfg.limits);
}

void validate(const Scenario& s, const SessionConfig& cfg) {
  auto bad = [&](const std::string& what) { throw Error(ErrorCode::kScenarioInvalid, "scenario: " + what); };
  try {
    validate(s.phantom);
    validate(s.channel);
  } catch (const Error& e) {
    bad(e.what());
  }
  if (!(s.contact_depth >= 0.0) || s.contact_depth > cfg.workspace.half_extents.z())
    bad("contact_depth outside the workspace z range");
  for (std::size_t i = 0; i < s.sweep.size(); ++i) {
    const auto& st = s.sweep[i];
    const Eigen::Vector3d p{st.xy.x(), st.xy.y(), -s.contact_depth};
    if (!st.xy.allFinite() || !cfg.workspace.contains(p))
      bad("station " + std::to_string(i) + " lies outside the workspace");
    if (!std::isfinite(st.tilt) || std::abs(st.tilt) > cfg.limits.max_tilt)
      bad("station " + std::to_string(i) + " tilt exceeds the fine-stage limit");
    if (st.dwell_ticks < 0) bad("station " + std::to_string(i) + " has negative dwell_ticks");
  }
  for (const auto& m : s.measurements)
    if (m.station_index >= s.sweep.size())
      bad("measurement references missing station " + std::to_string(m.station_index));
}

SessionTrace run_session(const Scenario& scenario, const ChannelParams& channel, std::uint64_t seed,
                         const SessionConfig& cfg) {
  validate(scenario, cfg);

  ChannelParams up_params = channel;
  up_params.seed = splitmix64(seed ^ channel.seed);
  ChannelParams down_params = channel;
  down_params.seed = splitmix64(up_params.seed);
  Channel up(up_params);
  Channel down(down_params);

  MasterState master;
  SlaveState slave;
  ScriptedOperator op(scenario, cfg);
  SessionTrace trace;

  std::uint32_t master_seq = 0;
  std::uint32_t slave_seq = 0;
  bool slave_established = false;
  LinkPhase master_phase = master.link.state;
  LinkPhase slave_phase = slave.link.state;
  std::uint64_t up_bytes_mark = 0;
  std::uint64_t down_bytes_mark = 0;
  SimTime finished_at{-1};

  const auto record_links = [&](SimTime now) {
    if (master.link.state != master_phase) {
      trace.events.push_back({now, "master", "link", std::string(link_phase_name(master_phase)) + " -> " +
                                                          link_phase_name(master.link.state)});
      master_phase = master.link.state;
    }
    if (slave.link.state != slave_phase) {
      trace.events.push_back({now, "slave", "link", std::string(link_phase_name(slave_phase)) + " -> " +
                                                         link_phase_name(slave.link.state)});
      slave_phase = slave.link.state;
    }
  };

  try {
    for (std::int64_t k = 0;; ++k) {
      const SimTime now = cfg.tick * k;

      if (now.count() % cfg.status_period.count() == 0) {
        slave.rx_bytes_per_s = up.delivered_bytes() - up_bytes_mark;
        slave.tx_bytes_per_s = down.delivered_bytes() - down_bytes_mark;
        up_bytes_mark = up.delivered_bytes();
        down_bytes_mark = down.delivered_bytes();
      }

      for (auto& bytes : up.poll(now)) slave_receive(slave, decode(bytes), now, cfg);
      const bool was_halted = slave.halted;
      for (const auto& m : slave_tick(slave, cfg, scenario.phantom, now))
        down.send(encode(m, slave_seq++, static_cast<std::uint64_t>(now.count())), now);
      if (slave.halted != was_halted)
        trace.events.push_back({now, "slave", slave.halted ? "halt" : "resume",
                                std::string("link ") + link_phase_name(slave.link.state)});
      if (slave.link.state == LinkPhase::kActive) slave_established = true;

      for (auto& bytes : down.poll(now)) {
        const Envelope env = decode(bytes);
        if (const auto* fm = std::get_if<UsFrameMsg>(&env.body))
          trace.events.push_back({now, "master", "frame",
                                  "id " + std::to_string(fm->frame_id) + (fm->frozen ? " frozen" : "")});
        master_receive(master, env, now, cfg);
      }

      const OperatorInput input = op.step(master, now, trace);
      for (const auto& m : master_tick(master, input, now, cfg)) {
        if (const auto* sc = std::get_if<SessionControl>(&m))
          trace.events.push_back({now, "master", "control", session_op_name(sc->op)});
        up.send(encode(m, master_seq++, static_cast<std::uint64_t>(now.count())), now);
      }
      record_links(now);

      TraceTick t;
      t.t = now;
      t.master_probe = master.virtual_probe;
      t.slave_probe = slave.actual_probe;
      t.raw_force = slave.contact_force;
      t.rendered_force = master.last_rendered_force;
      t.master_link = master.link.state;
      t.slave_link = slave.link.state;
      t.slave_last_heartbeat = slave.link.last_heartbeat_rx;
      t.slave_established = slave_established;
      t.halted = slave.halted;
      t.cables = slave.cables;
      trace.ticks.push_back(t);
      trace.end = now;

      if (op.finished()) {
        if (finished_at.count() < 0) finished_at = now;
        const bool drained = up.in_flight() == 0 && down.in_flight() == 0;
        if (drained || now - finished_at >= kDrainLimit) break;
      }
    }
  } catch (const Error& e) {
    trace.failure = e.what();
    trace.events.push_back({trace.end, "session", "failure", e.what()});
  }

  trace.completed = op.finished() && !op.failed() && trace.failure.empty();
  trace.up_sent = up.sent();
  trace.up_delivered = up.delivered();
  trace.up_dropped = up.dropped();
  trace.down_sent = down.sent();
  trace.down_delivered = down.delivered();
  trace.down_dropped = down.dropped();
  return trace;
}

void write_trace_jsonl(const SessionTrace& trace, std::ostream& out) {
  std::size_t ei = 0;
  const auto flush_events = [&](SimTime upto) {
    for (; ei < trace.events.size() && trace.events[ei].t <= upto; ++ei) {
      const auto& e = trace.events[ei];
      out << json{{"t_us", e.t.count()}, {"actor", e.actor}, {"event", e.type}, {"payload", e.summary}}.dump()
          << '\n';
    }
  };
  for (const auto& t : trace.ticks) {
    flush_events(t.t);
    json payload{{"master_probe", pose_json(t.master_probe)},
                 {"slave_probe", pose_json(t.slave_probe)},
                 {"raw_force", vec_json(t.raw_force)},
                 {"rendered_force", vec_json(t.rendered_force)},
                 {"master_link", link_phase_name(t.master_link)},
                 {"slave_link", link_phase_name(t.slave_link)},
                 {"halted", t.halted},
                 {"cables", {t.cables[0], t.cables[1], t.cables[2], t.cables[3]}}};
    out << json{{"t_us", t.t.count()}, {"actor", "session"}, {"event", "tick"}, {"payload", payload}}.dump()
        << '\n';
  }
  flush_events(SimTime::max());
  out << json{{"t_us", trace.end.count()},
              {"actor", "session"},
              {"event", "summary"},
              {"payload",
               {{"completed", trace.completed},
                {"failure", trace.failure},
                {"duration_s", to_seconds(trace.duration)},
                {"captures", trace.captures.size()},
                {"measurements", trace.measurements.size()},
                {"up", {{"sent", trace.up_sent}, {"delivered", trace.up_delivered}, {"dropped", trace.up_dropped}}},
                {"down",
                 {{"sent", trace.down_sent}, {"delivered", trace.down_delivered}, {"dropped", trace.down_dropped}}}}}}
             .dump()
      << '\n';
}

}  // namespace tersim
