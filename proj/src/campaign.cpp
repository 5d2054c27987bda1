// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/discrete_distribution.hpp>
#include <boost/random/lognormal_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <fmt/format.h>

#include "tersim/error.hpp"
#include "tersim/exam.hpp"
#include "tersim/util.hpp"

namespace tersim {

namespace {

using ojson = nlohmann::ordered_json;
using Rng = std::mt19937_64;

constexpr double kAortaStationStep = 0.008;
constexpr double kAortaSweepTop = 0.06;
constexpr double kIliacStationDrop = 0.03;
constexpr SimTime kForever{std::int64_t{1} << 60};

double uniform(Rng& rng, double lo, double hi) { return boost::random::uniform_real_distribution<double>(lo, hi)(rng); }

double clipped_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  const double v = sd > 0.0 ? boost::random::normal_distribution<double>(mean, sd)(rng) : mean;
  return std::clamp(v, lo, hi);
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = boost::random::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(v[i - 1], v[j]);
  }
}

PhantomConfig draw_phantom(const CohortSpec& spec, bool aaa, std::uint64_t patient_seed) {
  Rng rng(patient_seed);
  PhantomConfig ph;
  // Every draw happens regardless of branch so each variable keeps its own stream position.
  ph.aorta_base_radius =
      clipped_normal(rng, spec.aorta_radius_mean, spec.aorta_radius_sd, spec.aorta_radius_range[0], spec.aorta_radius_range[1]);
  ph.bifurcation_y = uniform(rng, -0.03, -0.015);
  for (auto& r : ph.iliac_radius) r = clipped_normal(rng, 0.0055, 0.0008, 0.004, 0.0075);
  ph.iliac_angle = uniform(rng, 0.3, 0.45);
  ph.stiffness = clipped_normal(rng, 800.0, 100.0, 500.0, 1200.0);
  ph.rng_seed = rng();
  ph.aorta_depth = uniform(rng, 0.05, 0.07);

  const std::vector<double> mix(spec.grade_mix.begin(), spec.grade_mix.end());
  ph.atheromatosis_grade = static_cast<Grade>(boost::random::discrete_distribution<int>(mix.begin(), mix.end())(rng));
  const double seg_start = uniform(rng, ph.bifurcation_y + 0.005, 0.04);
  const double seg_len = uniform(rng, 0.015, 0.03);
  if (ph.atheromatosis_grade == Grade::kSegmentary) ph.segmentary_extent_y = {seg_start, seg_start + seg_len};

  const double diameter = std::clamp(
      boost::random::lognormal_distribution<double>(std::log(spec.aaa_diameter_median), spec.aaa_diameter_sigma_log)(rng),
      spec.aaa_diameter_range[0], spec.aaa_diameter_range[1]);
  const double center = ph.bifurcation_y + uniform(rng, 0.015, 0.045);
  const double sigma = uniform(rng, 0.012, 0.02);
  const bool clot = boost::random::bernoulli_distribution<double>(spec.thrombus_probability)(rng);
  const double clot_fraction = uniform(rng, 0.2, 0.5);

  if (aaa) {
    ph.aneurysm = Aneurysm{center, diameter / 2.0, sigma};
    ph.aorta_depth = std::max(ph.aorta_depth, diameter / 2.0 + 0.012);
    if (clot) ph.thrombus = Thrombus{clot_fraction, center - 1.5 * sigma, center + 1.5 * sigma};
  }
  validate(ph);
  return ph;
}

}  // namespace

Scenario synthesize_scenario(const PhantomConfig& ph, const std::string& name, std::uint64_t seed) {
  Scenario sc;
  sc.name = name;
  sc.phantom = ph;
  sc.seed = seed;
  sc.channel = channel_preset("vthd");

  const double iliac_y = ph.bifurcation_y - kIliacStationDrop;
  const double iliac_x = kIliacStationDrop * std::tan(ph.iliac_angle);
  sc.sweep.push_back({{-iliac_x, iliac_y}, 0.0, 10});
  sc.measurements.push_back({0, MeasureKind::kApIliacRight});
  sc.sweep.push_back({{iliac_x, iliac_y}, 0.0, 10});
  sc.measurements.push_back({1, MeasureKind::kApIliacLeft});

  std::vector<double> ys;
  for (double y = ph.bifurcation_y + 0.005; y <= kAortaSweepTop + 1e-12; y += kAortaStationStep) ys.push_back(y);
  if (ph.aneurysm) {
    const double c = ph.aneurysm->center_y;
    const bool covered = std::any_of(ys.begin(), ys.end(), [c](double y) { return std::abs(y - c) < 0.001; });
    if (!covered && c > ph.bifurcation_y && c <= kAortaSweepTop) ys.push_back(c);
  }
  std::sort(ys.begin(), ys.end());
  for (double y : ys) {
    sc.measurements.push_back({sc.sweep.size(), MeasureKind::kApAorta});
    sc.sweep.push_back({{0.0, y}, 0.0, 10});
  }
  validate(sc);
  return sc;
}

std::vector<PatientPlan> plan_cohort(const CohortSpec& spec) {
  validate(spec);
  Rng group(spec.seed);
  const std::size_t n = spec.n_patients;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, group);
  std::vector<bool> failed(n, false);
  for (std::size_t k = 0; k < spec.failed_exams; ++k) failed[order[k]] = true;

  std::vector<std::size_t> completed;
  for (std::size_t i = 0; i < n; ++i)
    if (!failed[i]) completed.push_back(i);
  shuffle(completed, group);
  const auto n_aaa = static_cast<std::size_t>(std::lround(spec.aaa_prevalence * static_cast<double>(completed.size())));
  std::vector<bool> aaa(n, false);
  for (std::size_t k = 0; k < n_aaa && k < completed.size(); ++k) aaa[completed[k]] = true;

  std::vector<PatientPlan> plans;
  plans.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t patient_seed = splitmix64(spec.seed ^ splitmix64(i + 1));
    PatientPlan p;
    p.patient_id = fmt::format("P{:03}", i + 1);
    p.scenario = synthesize_scenario(draw_phantom(spec, aaa[i], patient_seed), p.patient_id, splitmix64(patient_seed));
    p.scenario.channel = spec.channel;
    p.scenario.channel.seed = splitmix64(patient_seed ^ spec.channel.seed);
    p.inject_failure = failed[i];
    if (p.inject_failure) p.scenario.channel.outage = Outage{SimTime{0}, kForever};
    plans.push_back(std::move(p));
  }
  return plans;
}

CampaignResult run_campaign(const CohortSpec& spec, const ProgressFn& progress) {
  const auto plans = plan_cohort(spec);
  CampaignResult out;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& p = plans[i];
    out.truths.emplace_back(p.patient_id, ground_truth(p.scenario.phantom));
    const ExamResult ex = run_exam(p.scenario, p.scenario.channel, p.scenario.seed, p.patient_id, spec.site_id);
    if (ex.remote_record) {
      out.records.push_back(ex.bedside_record);
      out.records.push_back(*ex.remote_record);
    } else {
      out.failed.push_back({p.patient_id, ex.remote.failure.empty() ? "session did not complete" : ex.remote.failure});
    }
    if (progress) progress(i + 1, plans.size(), p.patient_id);
  }
  std::ostringstream csv;
  write_records_csv(out.records, csv);
  out.records_csv = csv.str();
  std::istringstream back(out.records_csv);
  out.report = campaign_report(read_records_csv(back));
  return out;
}

ojson campaign_json(const CampaignResult& r, const CohortSpec& spec) {
  ojson j;
  j["cohort"] = {{"n_patients", spec.n_patients},
                 {"aaa_prevalence", spec.aaa_prevalence},
                 {"failed_exams", spec.failed_exams},
                 {"channel", spec.channel_name},
                 {"seed", spec.seed}};
  j["completed_exams"] = spec.n_patients - r.failed.size();
  j["report"] = r.report.json;
  ojson failed = ojson::array();
  for (const auto& f : r.failed) failed.push_back({{"patient_id", f.patient_id}, {"reason", f.reason}});
  j["failed_exams"] = failed;
  ojson truth = ojson::array();
  for (const auto& [id, t] : r.truths)
    truth.push_back({{"patient_id", id},
                     {"aaa", t.has_aaa},
                     {"max_ap_diameter_m", t.max_ap_diameter},
                     {"thrombus", t.has_thrombus},
                     {"grade", grade_name(t.grade)}});
  j["ground_truth"] = truth;
  return j;
}

void write_campaign_outputs(const CampaignResult& r, const CohortSpec& spec, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir))
    throw Error(ErrorCode::kIo, "cannot create directory " + out_dir.string());
  {
    std::ofstream out(out_dir / "records.csv", std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + (out_dir / "records.csv").string());
    out << r.records_csv;
  }
  std::ofstream out(out_dir / "report.json", std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + (out_dir / "report.json").string());
  out << campaign_json(r, spec).dump(2) << '\n';
}

}  // namespace tersim
