// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tersim/scenario.hpp"
#include "tersim/session.hpp"
#include "tersim/stats.hpp"

namespace tersim {

// The bedside physician presses lighter than the robot, so the two arms quantize the same
// anatomy onto different pixel rows.
inline constexpr double kBedsidePress = 0.00125;
inline constexpr double kHandSpeed = 0.1;  // m/s between stations
inline constexpr int kCaptureTicks = 2;
inline constexpr std::uint32_t kBedsideFrameIdBase = 1'000'000;

// Quality and acceptance are human judgments in a real study; the simulator emits these
// fixed values and flags them as not modeled.
inline constexpr double kPlaceholderQuality = 50.0;
inline constexpr double kPlaceholderAcceptance = 50.0;

struct BedsideResult {
  std::vector<StationCapture> captures;
  std::vector<Measurement> measurements;
  SimTime duration{0};
};

// Direct, zero-latency read of the phantom at each station.
BedsideResult run_bedside(const Scenario& sc, const SessionConfig& cfg = {});

ExamRecord derive_record(const Scenario& sc, std::span<const StationCapture> captures,
                         std::span<const Measurement> measurements, SimTime duration, Arm arm,
                         const std::string& patient_id, const std::string& site_id,
                         const SessionConfig& cfg = {});

struct ExamResult {
  Scenario scenario;
  ChannelParams channel;
  std::uint64_t seed = 0;
  GroundTruth truth;
  SessionTrace remote;
  BedsideResult bedside;
  ExamRecord bedside_record;
  std::optional<ExamRecord> remote_record;  // absent when the remote session failed
};

ExamResult run_exam(const Scenario& sc, const ChannelParams& channel, std::uint64_t seed,
                    const std::string& patient_id, const std::string& site_id = "site-1");

// Replaces the link characteristics of `base` with a preset, keeping its seed and outage.
ChannelParams apply_channel_preset(const ChannelParams& base, const std::string& preset);

nlohmann::ordered_json exam_json(const ExamResult& r);

// exam_records.csv, trace.jsonl, exam.json and frames/*.pgm. Throws Error(kIo).
void write_exam_outputs(const ExamResult& r, const std::filesystem::path& out_dir);

// ---- campaign ------------------------------------------------------------------------------

struct PatientPlan {
  std::string patient_id;
  Scenario scenario;
  bool inject_failure = false;
};

// Seeded phantoms and sweeps for the whole cohort.
std::vector<PatientPlan> plan_cohort(const CohortSpec& spec);

// Sweep over the aorta every ~8 mm, the aneurysm center and both iliacs.
Scenario synthesize_scenario(const PhantomConfig& phantom, const std::string& name, std::uint64_t seed);

struct FailedExam {
  std::string patient_id;
  std::string reason;
};

struct CampaignResult {
  std::vector<ExamRecord> records;
  std::vector<FailedExam> failed;
  std::vector<std::pair<std::string, GroundTruth>> truths;
  std::string records_csv;
  StudyReport report;  // computed from `records_csv` read back
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total, const std::string& patient_id)>;

CampaignResult run_campaign(const CohortSpec& spec, const ProgressFn& progress = {});

nlohmann::ordered_json campaign_json(const CampaignResult& r, const CohortSpec& spec);

// records.csv and report.json. Throws Error(kIo).
void write_campaign_outputs(const CampaignResult& r, const CohortSpec& spec, const std::filesystem::path& out_dir);

}  // namespace tersim
