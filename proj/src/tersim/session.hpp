// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tersim/kinematics.hpp"
#include "tersim/netchannel.hpp"
#include "tersim/phantom.hpp"
#include "tersim/protocol.hpp"
#include "tersim/time.hpp"

namespace tersim {

// Haptic device limit; the master never renders more than this.
inline constexpr double kForceCap = 6.4;

struct SessionConfig {
  SimTime tick{10'000};
  double v_max = 0.05;
  double w_max = 0.5;
  double force_cap = kForceCap;
  SimTime frame_period{50'000};
  SimTime status_period{1'000'000};
  Workspace workspace;
  FineStageLimits limits;
  CableRig rig;
};

// Probe pose before the first station: centered, vertical, 3 mm above the skin.
Pose home_pose();

// Scales `f` so its magnitude never exceeds `cap`.
Eigen::Vector3d cap_force(const Eigen::Vector3d& f, double cap);

// ---- master -----------------------------------------------------------------------------

struct OperatorInput {
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  bool freeze = false;
  bool unfreeze = false;
  bool end_session = false;
};

struct MasterState {
  Pose virtual_probe = home_pose();
  Eigen::Vector3d last_rendered_force = Eigen::Vector3d::Zero();
  LinkState link;
  std::optional<UsFrame> frame_buffer;
  bool frozen = false;
  bool started = false;
  std::optional<StatusReport> last_status;
  SimTime next_heartbeat{0};
  SimTime next_hello{0};
};

inline constexpr SimTime kHelloRetry{250'000};

std::vector<Message> master_tick(MasterState& ms, const OperatorInput& input, SimTime now,
                                 const SessionConfig& cfg = {});

// Throws Error(kProtocolViolation) when the message is illegal in the current link state.
void master_receive(MasterState& ms, const Envelope& env, SimTime now, const SessionConfig& cfg = {});

// ---- slave ------------------------------------------------------------------------------

struct SlaveState {
  Pose actual_probe = home_pose();
  Pose commanded_probe = home_pose();
  LinkState link;
  Eigen::Vector3d contact_force = Eigen::Vector3d::Zero();
  bool halted = false;
  bool in_contact = false;
  CableLengths cables{};

  bool hello_reply_pending = false;
  bool freeze_pending = false;
  std::optional<UsFrame> frozen_frame;
  std::optional<std::uint32_t> last_freeze_ctl_seq;
  std::uint32_t next_frame_id = 0;
  SimTime next_frame{0};
  SimTime next_heartbeat{0};
  SimTime next_status{0};

  // Transfer accounting, filled in by the transport.
  std::uint64_t rx_bytes_per_s = 0;
  std::uint64_t tx_bytes_per_s = 0;
  std::uint64_t rtt_estimate_us = 0;
};

// Throws Error(kProtocolViolation) when the message is illegal in the current link state.
void slave_receive(SlaveState& ss, const Envelope& env, SimTime now, const SessionConfig& cfg = {});

std::vector<Message> slave_tick(SlaveState& ss, const SessionConfig& cfg, const PhantomConfig& phantom,
                                SimTime now);

// ---- scripted exam ----------------------------------------------------------------------

struct Station {
  Eigen::Vector2d xy = Eigen::Vector2d::Zero();
  double tilt = 0.0;
  int dwell_ticks = 10;
};

enum class MeasureKind : std::uint8_t { kApAorta, kApIliacLeft, kApIliacRight };

const char* measure_kind_name(MeasureKind k) noexcept;

struct MeasurementRequest {
  std::size_t station_index = 0;
  MeasureKind measure = MeasureKind::kApAorta;
};

struct Scenario {
  std::string name;
  PhantomConfig phantom;
  std::vector<Station> sweep;
  std::vector<MeasurementRequest> measurements;
  ChannelParams channel;
  std::uint64_t seed = 0;
  double contact_depth = 0.002;  // how far the robot presses the probe into the skin
};

// Throws Error(kScenarioInvalid).
void validate(const Scenario& s, const SessionConfig& cfg = {});

Pose station_pose(const Station& st, double contact_depth, const SessionConfig& cfg = {});

struct TraceTick {
  SimTime t{0};
  Pose master_probe;
  Pose slave_probe;
  Eigen::Vector3d raw_force = Eigen::Vector3d::Zero();
  Eigen::Vector3d rendered_force = Eigen::Vector3d::Zero();
  LinkPhase master_link = LinkPhase::kIdle;
  LinkPhase slave_link = LinkPhase::kIdle;
  SimTime slave_last_heartbeat{0};
  bool slave_established = false;
  bool halted = false;
  CableLengths cables{};
};

struct TraceEvent {
  SimTime t{0};
  std::string actor;
  std::string type;
  std::string summary;
};

struct StationCapture {
  std::size_t station_index = 0;
  SimTime captured_at{0};
  UsFrame frame;
  std::optional<VesselReading> reading;
  std::string error;
};

struct Measurement {
  std::size_t station_index = 0;
  MeasureKind kind = MeasureKind::kApAorta;
  double value = 0.0;
  bool thrombus_seen = false;
};

struct SessionTrace {
  std::vector<TraceTick> ticks;
  std::vector<TraceEvent> events;
  std::vector<StationCapture> captures;
  std::vector<Measurement> measurements;
  bool completed = false;
  std::string failure;
  SimTime handshake_at{0};
  SimTime duration{0};  // session start to last measurement
  SimTime end{0};
  std::uint64_t up_sent = 0, up_delivered = 0, up_dropped = 0;
  std::uint64_t down_sent = 0, down_delivered = 0, down_dropped = 0;
};

inline constexpr SimTime kPhaseTimeout{10'000'000};

// Lock-step co-simulation of master, slave and both channel directions. Never throws for
// in-session failures: they are reported through `completed` / `failure`.
SessionTrace run_session(const Scenario& scenario, const ChannelParams& channel, std::uint64_t seed,
                         const SessionConfig& cfg = {});

// One JSON object per line: tick records and events in time order.
void write_trace_jsonl(const SessionTrace& trace, std::ostream& out);

}  // namespace tersim
