// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#include "tersim/exam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "tersim/error.hpp"
#include "tersim/util.hpp"

namespace tersim {

namespace {

using ojson = nlohmann::ordered_json;

bool is_aorta_station(const Station& st, const PhantomConfig& ph) {
  return std::abs(st.xy.x()) < ph.aorta_base_radius && st.xy.y() > ph.bifurcation_y;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
  return out;
}

void make_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec || !std::filesystem::is_directory(p))
    throw Error(ErrorCode::kIo, "cannot create directory " + p.string() + (ec ? ": " + ec.message() : ""));
}

ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson record_json(const ExamRecord& r) {
  return {{"patient_id", r.patient_id},
          {"site_id", r.site_id},
          {"arm", arm_name(r.arm)},
          {"aaa_detected", r.aaa_detected},
          {"ap_diameter_m", opt(r.ap_diameter)},
          {"thrombus", r.thrombus ? ojson(*r.thrombus) : ojson(nullptr)},
          {"iliac_left_m", opt(r.iliac_left)},
          {"iliac_right_m", opt(r.iliac_right)},
          {"grade", r.grade ? ojson(grade_name(*r.grade)) : ojson(nullptr)},
          {"duration_s", r.duration},
          {"quality_score", r.quality_score},
          {"acceptance_score", r.acceptance_score}};
}

ojson measurements_json(std::span<const Measurement> ms) {
  ojson a = ojson::array();
  for (const auto& m : ms)
    a.push_back({{"station", m.station_index},
                 {"measure", measure_kind_name(m.kind)},
                 {"value_m", m.value},
                 {"thrombus_seen", m.thrombus_seen}});
  return a;
}

}  // namespace

BedsideResult run_bedside(const Scenario& sc, const SessionConfig& cfg) {
  validate(sc, cfg);
  BedsideResult out;
  std::int64_t ticks = 0;
  Eigen::Vector2d at = home_pose().position.head<2>();
  for (std::size_t i = 0; i < sc.sweep.size(); ++i) {
    const Station& st = sc.sweep[i];
    const double travel = (st.xy - at).norm() / kHandSpeed;
    ticks += static_cast<std::int64_t>(std::ceil(travel / to_seconds(cfg.tick) - 1e-9));
    ticks += st.dwell_ticks + kCaptureTicks;
    at = st.xy;
    const SimTime now = cfg.tick * ticks;

    StationCapture cap;
    cap.station_index = i;
    cap.captured_at = now;
    const Pose pose = station_pose(st, kBedsidePress, cfg);
    cap.frame = render_frame(sc.phantom, pose, kBedsideFrameIdBase + static_cast<std::uint32_t>(i));
    cap.frame.frozen = true;
    try {
      cap.reading = read_vessel(cap.frame);
    } catch (const Error& e) {
      cap.error = e.what();
    }
    for (const auto& req : sc.measurements) {
      if (req.station_index != i || !cap.reading) continue;
      out.measurements.push_back({i, req.measure, cap.reading->ap_diameter, cap.reading->thrombus_seen});
      out.duration = now;
    }
    out.captures.push_back(std::move(cap));
  }
  return out;
}

ExamRecord derive_record(const Scenario& sc, std::span<const StationCapture> captures,
                         std::span<const Measurement> measurements, SimTime duration, Arm arm,
                         const std::string& patient_id, const std::string& site_id, const SessionConfig& cfg) {
  ExamRecord r;
  r.patient_id = patient_id;
  r.site_id = site_id;
  r.arm = arm;
  r.duration = to_seconds(duration);
  r.quality_score = kPlaceholderQuality;
  r.acceptance_score = kPlaceholderAcceptance;

  const auto take_max = [](std::optional<double>& dst, double v) { dst = dst ? std::max(*dst, v) : v; };
  bool clot = false;
  for (const auto& m : measurements) {
    switch (m.kind) {
      case MeasureKind::kApAorta:
        take_max(r.ap_diameter, m.value);
        if (m.value >= kAaaThreshold && m.thrombus_seen) clot = true;
        break;
      case MeasureKind::kApIliacLeft: take_max(r.iliac_left, m.value); break;
      case MeasureKind::kApIliacRight: take_max(r.iliac_right, m.value); break;
    }
  }
  r.aaa_detected = r.ap_diameter && *r.ap_diameter >= kAaaThreshold;
  if (r.aaa_detected) r.thrombus = clot;

  std::vector<UsFrame> aorta_frames;
  for (const auto& c : captures)
    if (c.reading && c.station_index < sc.sweep.size() && is_aorta_station(sc.sweep[c.station_index], sc.phantom))
      aorta_frames.push_back(c.frame);
  try {
    r.grade = grade_estimate(aorta_frames, {sc.phantom.bifurcation_y, cfg.workspace.half_extents.y()});
  } catch (const Error&) {
    r.grade.reset();
  }
  return r;
}

ChannelParams apply_channel_preset(const ChannelParams& base, const std::string& preset) {
  ChannelParams p = channel_preset(preset);
  p.seed = base.seed;
  p.outage = base.outage;
  return p;
}

ExamResult run_exam(const Scenario& sc, const ChannelParams& channel, std::uint64_t seed,
                    const std::string& patient_id, const std::string& site_id) {
  const SessionConfig cfg;
  ExamResult r;
  r.scenario = sc;
  r.channel = channel;
  r.seed = seed;
  r.truth = ground_truth(sc.phantom);
  r.remote = run_session(sc, channel, seed, cfg);
  r.bedside = run_bedside(sc, cfg);
  r.bedside_record = derive_record(sc, r.bedside.captures, r.bedside.measurements, r.bedside.duration,
                                   Arm::kBedside, patient_id, site_id, cfg);
  if (r.remote.completed)
    r.remote_record = derive_record(sc, r.remote.captures, r.remote.measurements, r.remote.duration, Arm::kRemote,
                                    patient_id, site_id, cfg);
  return r;
}

ojson exam_json(const ExamResult& r) {
  ojson j;
  j["scenario"] = r.scenario.name;
  j["seed"] = r.seed;
  j["channel"] = {{"base_delay_s", r.channel.base_delay},
                  {"jitter_s", r.channel.jitter},
                  {"loss_prob", r.channel.loss_prob}};
  j["ground_truth"] = {{"aaa", r.truth.has_aaa},
                       {"max_ap_diameter_m", r.truth.max_ap_diameter},
                       {"thrombus", r.truth.has_thrombus},
                       {"iliac_ap_diameters_m", r.truth.iliac_ap_diameters},
                       {"grade", grade_name(r.truth.grade)}};
  j["remote"] = {{"completed", r.remote.completed},
                 {"failure", r.remote.failure.empty() ? ojson(nullptr) : ojson(r.remote.failure)},
                 {"handshake_s", to_seconds(r.remote.handshake_at)},
                 {"duration_s", to_seconds(r.remote.duration)},
                 {"measurements", measurements_json(r.remote.measurements)},
                 {"record", r.remote_record ? record_json(*r.remote_record) : ojson(nullptr)},
                 {"messages",
                  {{"up", {{"sent", r.remote.up_sent}, {"delivered", r.remote.up_delivered}, {"dropped", r.remote.up_dropped}}},
                   {"down",
                    {{"sent", r.remote.down_sent}, {"delivered", r.remote.down_delivered}, {"dropped", r.remote.down_dropped}}}}}};
  j["bedside"] = {{"duration_s", to_seconds(r.bedside.duration)},
                  {"measurements", measurements_json(r.bedside.measurements)},
                  {"record", record_json(r.bedside_record)}};
  j["scores_modeled"] = false;
  return j;
}

void write_exam_outputs(const ExamResult& r, const std::filesystem::path& out_dir) {
  make_dir(out_dir);
  make_dir(out_dir / "frames");
  {
    std::vector<ExamRecord> recs{r.bedside_record};
    if (r.remote_record) recs.push_back(*r.remote_record);
    auto out = open_out(out_dir / "exam_records.csv");
    write_records_csv(recs, out);
  }
  {
    auto out = open_out(out_dir / "trace.jsonl");
    write_trace_jsonl(r.remote, out);
  }
  {
    auto out = open_out(out_dir / "exam.json");
    out << exam_json(r).dump(2) << '\n';
  }
  for (const auto& c : r.remote.captures)
    write_pgm(c.frame, out_dir / "frames" / fmt::format("remote_station_{:02}.pgm", c.station_index));
  for (const auto& c : r.bedside.captures)
    write_pgm(c.frame, out_dir / "frames" / fmt::format("bedside_station_{:02}.pgm", c.station_index));
}

}  // namespace tersim
