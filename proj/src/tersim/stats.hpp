// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tersim/phantom.hpp"

namespace tersim {

struct MeasurementPair {
  double bedside = 0.0;
  double remote = 0.0;
  std::string site_id;
  std::string patient_id;
};

struct GradePair {
  Grade bedside = Grade::kNone;
  Grade remote = Grade::kNone;
};

enum class Arm : std::uint8_t { kBedside, kRemote };

const char* arm_name(Arm a) noexcept;

struct ExamRecord {
  std::string patient_id;
  std::string site_id;
  Arm arm = Arm::kBedside;
  bool aaa_detected = false;
  std::optional<double> ap_diameter;  // meters
  std::optional<bool> thrombus;
  std::optional<double> iliac_left;   // meters
  std::optional<double> iliac_right;  // meters
  std::optional<Grade> grade;
  double duration = 0.0;              // seconds
  double quality_score = 0.0;         // 0..100
  double acceptance_score = 0.0;      // 0..100

  bool operator==(const ExamRecord&) const = default;
};

void validate(const ExamRecord& r);  // throws Error(kInvalidArgument)

// ---- Student t ------------------------------------------------------------------------------

// Regularized incomplete beta I_x(a, b), a, b > 0, 0 <= x <= 1.
double incomplete_beta(double a, double b, double x);

// P(|T| >= |t|) for T ~ Student t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

double student_t_cdf(double t, double df);

// ---- operations ----------------------------------------------------------------------------

struct PearsonResult {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

// x = bedside, y = remote. Throws kTooFew (n < 3) or kDegenerateVariance.
PearsonResult pearson_r(std::span<const MeasurementPair> pairs);

// ICC(2,1): two-way random effects, absolute agreement, single rater. Throws kTooFew (n < 2)
// or kDegenerateVariance.
double icc_2_1(std::span<const MeasurementPair> pairs);

struct KappaResult {
  double kappa = 0.0;
  double se = 0.0;
  double ci95_lo = 0.0;
  double ci95_hi = 0.0;
  double p_observed = 0.0;
  double p_expected = 0.0;
  double n = 0.0;
};

using ContingencyTable = std::vector<std::vector<double>>;  // rows: rater A, columns: rater B

// Simple (unweighted) Cohen kappa with the Fleiss-Cohen-Everitt large-sample SE.
// Throws kInvalidArgument for malformed tables and kUndefinedKappa when p_e = 1.
KappaResult cohen_kappa(const ContingencyTable& table);

enum class KappaWeights : std::uint8_t { kLinear, kQuadratic };

// Weighted kappa for ordered categories, same SE family.
KappaResult weighted_kappa(const ContingencyTable& table, KappaWeights weights);

ContingencyTable grade_table(std::span<const GradePair> pairs);

struct RelativeErrors {
  std::vector<double> errors;  // (remote - bedside) / bedside, input order
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;

  // Fraction of errors with |e| < t.
  double frac_below(double t) const;
};

// Throws kDivisionDegenerate when a bedside value is not positive, kTooFew when empty.
RelativeErrors relative_errors(std::span<const MeasurementPair> pairs);

struct DiffBuckets {
  std::array<double, 2> cuts{0.004, 0.010};
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> percent{};
  std::size_t n = 0;
};

// |remote - bedside| into [0, c0), [c0, c1], (c1, inf). Differences within 1e-12 m of a cut
// count as equal to it.
DiffBuckets abs_diff_buckets(std::span<const MeasurementPair> pairs, std::array<double, 2> cuts = {0.004, 0.010});

struct PairedTResult {
  double t = 0.0;
  double p_value = 1.0;
  double mean_diff = 0.0;
  double sd_diff = 0.0;
  std::size_t n = 0;
};

// d = remote - bedside. Throws kTooFew (n < 2) or kDegenerateVariance.
PairedTResult paired_t_test(std::span<const MeasurementPair> pairs);

// ---- report --------------------------------------------------------------------------------

struct PatientPair {
  ExamRecord bedside;
  ExamRecord remote;
};

// Groups records by patient in order of first appearance. Throws kUnpairedRecord listing the
// offending ids (or for empty input).
std::vector<PatientPair> pair_records(std::span<const ExamRecord> records);

struct StudyReport {
  nlohmann::ordered_json json;
};

StudyReport campaign_report(std::span<const ExamRecord> records);

std::string format_report_table(const StudyReport& report);

// ---- CSV -----------------------------------------------------------------------------------

inline constexpr std::array<std::string_view, 12> kRecordColumns = {
    "patient_id", "site_id",  "arm",   "aaa_detected", "ap_diameter_m", "thrombus",
    "iliac_left_m", "iliac_right_m", "grade", "duration_s", "quality_score", "acceptance_score"};

void write_records_csv(std::span<const ExamRecord> records, std::ostream& out);

// Throws Error(kParse) naming the row (1-based, header = row 1) and column.
std::vector<ExamRecord> read_records_csv(std::istream& in);

}  // namespace tersim
