// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#include "tersim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "tersim/error.hpp"
#include "tersim/util.hpp"

namespace tersim {

namespace {

using ojson = nlohmann::ordered_json;

constexpr double kZ95 = 1.959963984540054;
constexpr double kBucketTolerance = 1e-12;

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Lentz continued fraction for the incomplete beta function.
double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw Error(ErrorCode::kInternal, "incomplete beta: continued fraction did not converge");
}

std::vector<double> diffs_of(std::span<const MeasurementPair> pairs) {
  std::vector<double> d;
  d.reserve(pairs.size());
  for (const auto& p : pairs) d.push_back(p.remote - p.bedside);
  return d;
}

void check_table(const ContingencyTable& t) {
  const std::size_t k = t.size();
  if (k < 2) throw Error(ErrorCode::kInvalidArgument, "kappa: table needs at least 2 categories");
  double total = 0.0;
  for (const auto& row : t) {
    if (row.size() != k) throw Error(ErrorCode::kInvalidArgument, "kappa: table must be square");
    for (double c : row) {
      if (!(c >= 0.0) || !std::isfinite(c))
        throw Error(ErrorCode::kInvalidArgument, "kappa: counts must be finite and non-negative");
      total += c;
    }
  }
  if (!(total > 0.0)) throw Error(ErrorCode::kInvalidArgument, "kappa: table is empty");
}

// Kappa with agreement weights w (w_ii = 1), Fleiss-Cohen-Everitt variance.
KappaResult kappa_with_weights(const ContingencyTable& t, const std::function<double(std::size_t, std::size_t)>& w) {
  check_table(t);
  const std::size_t k = t.size();
  double n = 0.0;
  for (const auto& row : t) n += std::accumulate(row.begin(), row.end(), 0.0);

  std::vector<double> row_m(k, 0.0), col_m(k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      row_m[i] += t[i][j] / n;
      col_m[j] += t[i][j] / n;
    }

  double po = 0.0, pe = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      po += w(i, j) * t[i][j] / n;
      pe += w(i, j) * row_m[i] * col_m[j];
    }
  if (pe >= 1.0) throw Error(ErrorCode::kUndefinedKappa, "kappa: chance agreement is 1");

  const double kappa = (po - pe) / (1.0 - pe);

  std::vector<double> wr(k, 0.0), wc(k, 0.0);  // weighted marginals
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      wr[i] += col_m[j] * w(i, j);
      wc[j] += row_m[i] * w(i, j);
    }
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double term = w(i, j) - (wr[i] + wc[j]) * (1.0 - kappa);
      sum += t[i][j] / n * term * term;
    }
  const double bias = kappa - pe * (1.0 - kappa);
  const double var = std::max(0.0, (sum - bias * bias) / (n * (1.0 - pe) * (1.0 - pe)));

  KappaResult r;
  r.kappa = kappa;
  r.se = std::sqrt(var);
  r.ci95_lo = kappa - kZ95 * r.se;
  r.ci95_hi = kappa + kZ95 * r.se;
  r.p_observed = po;
  r.p_expected = pe;
  r.n = n;
  return r;
}

}  // namespace

const char* arm_name(Arm a) noexcept { return a == Arm::kBedside ? "bedside" : "remote"; }

void validate(const ExamRecord& r) {
  auto bad = [&](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, "record " + r.patient_id + "/" + arm_name(r.arm) + ": " + what);
  };
  if (r.patient_id.empty()) bad("empty patient_id");
  for (const auto* id : {&r.patient_id, &r.site_id})
    if (id->find_first_of(",\"\r\n") != std::string::npos) bad("ids must not contain commas, quotes or newlines");
  for (const auto& [name, v] : {std::pair{"ap_diameter", r.ap_diameter}, std::pair{"iliac_left", r.iliac_left},
                                std::pair{"iliac_right", r.iliac_right}})
    if (v && !(*v > 0.0 && std::isfinite(*v))) bad(std::string(name) + " must be positive");
  if (!(r.duration >= 0.0) || !std::isfinite(r.duration)) bad("duration must be >= 0");
  for (double s : {r.quality_score, r.acceptance_score})
    if (!(s >= 0.0 && s <= 100.0)) bad("scores must lie in [0, 100]");
}

// ---- Student t ------------------------------------------------------------------------------

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "incomplete beta: need a, b > 0 and x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw Error(ErrorCode::kInvalidArgument, "student t: df must be positive");
  if (std::isnan(t)) throw Error(ErrorCode::kInvalidArgument, "student t: t is NaN");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

double student_t_cdf(double t, double df) {
  const double tail = student_t_two_sided_p(t, df) / 2.0;
  return t < 0.0 ? tail : 1.0 - tail;
}

// ---- operations ----------------------------------------------------------------------------

PearsonResult pearson_r(std::span<const MeasurementPair> pairs) {
  const std::size_t n = pairs.size();
  if (n < 3) throw Error(ErrorCode::kTooFew, "pearson: need at least 3 pairs");
  double mx = 0.0, my = 0.0;
  for (const auto& p : pairs) {
    mx += p.bedside;
    my += p.remote;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (const auto& p : pairs) {
    const double dx = p.bedside - mx;
    const double dy = p.remote - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::kDegenerateVariance, "pearson: zero variance");

  PearsonResult res;
  res.n = n;
  res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  if (std::abs(res.r) == 1.0) {
    res.p_value = 0.0;
  } else {
    const double t = res.r * std::sqrt(df / (1.0 - res.r * res.r));
    res.p_value = student_t_two_sided_p(t, df);
  }
  return res;
}

double icc_2_1(std::span<const MeasurementPair> pairs) {
  const std::size_t n = pairs.size();
  if (n < 2) throw Error(ErrorCode::kTooFew, "icc: need at least 2 pairs");
  constexpr double k = 2.0;
  const double nn = static_cast<double>(n);
  double grand = 0.0, m_bed = 0.0, m_rem = 0.0;
  for (const auto& p : pairs) {
    m_bed += p.bedside;
    m_rem += p.remote;
  }
  m_bed /= nn;
  m_rem /= nn;
  grand = (m_bed + m_rem) / 2.0;

  double ss_rows = 0.0, ss_total = 0.0;
  for (const auto& p : pairs) {
    const double row_mean = (p.bedside + p.remote) / 2.0;
    ss_rows += k * (row_mean - grand) * (row_mean - grand);
    ss_total += (p.bedside - grand) * (p.bedside - grand) + (p.remote - grand) * (p.remote - grand);
  }
  const double ss_cols = nn * ((m_bed - grand) * (m_bed - grand) + (m_rem - grand) * (m_rem - grand));
  const double ss_err = std::max(0.0, ss_total - ss_rows - ss_cols);

  const double msr = ss_rows / (nn - 1.0);
  const double msc = ss_cols / (k - 1.0);
  const double mse = ss_err / ((nn - 1.0) * (k - 1.0));
  const double denom = msr + (k - 1.0) * mse + k * (msc - mse) / nn;
  if (ss_total == 0.0 || denom == 0.0) throw Error(ErrorCode::kDegenerateVariance, "icc: zero variance");
  return (msr - mse) / denom;
}

KappaResult cohen_kappa(const ContingencyTable& table) {
  return kappa_with_weights(table, [](std::size_t i, std::size_t j) { return i == j ? 1.0 : 0.0; });
}

KappaResult weighted_kappa(const ContingencyTable& table, KappaWeights weights) {
  const double span = static_cast<double>(table.size()) - 1.0;
  if (weights == KappaWeights::kLinear)
    return kappa_with_weights(table, [span](std::size_t i, std::size_t j) {
      return 1.0 - std::abs(static_cast<double>(i) - static_cast<double>(j)) / span;
    });
  return kappa_with_weights(table, [span](std::size_t i, std::size_t j) {
    const double d = (static_cast<double>(i) - static_cast<double>(j)) / span;
    return 1.0 - d * d;
  });
}

ContingencyTable grade_table(std::span<const GradePair> pairs) {
  ContingencyTable t(3, std::vector<double>(3, 0.0));
  for (const auto& p : pairs) t[static_cast<std::size_t>(p.bedside)][static_cast<std::size_t>(p.remote)] += 1.0;
  return t;
}

double RelativeErrors::frac_below(double t) const {
  if (errors.empty()) return 0.0;
  const auto c = std::count_if(errors.begin(), errors.end(), [t](double e) { return std::abs(e) < t; });
  return static_cast<double>(c) / static_cast<double>(errors.size());
}

RelativeErrors relative_errors(std::span<const MeasurementPair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::kTooFew, "relative errors: no pairs");
  RelativeErrors r;
  r.errors.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (!(p.bedside > 0.0))
      throw Error(ErrorCode::kDivisionDegenerate, "relative errors: bedside value must be positive");
    r.errors.push_back((p.remote - p.bedside) / p.bedside);
  }
  std::vector<double> sorted = r.errors;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  r.median = n % 2 == 1 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
  r.min = sorted.front();
  r.max = sorted.back();
  return r;
}

DiffBuckets abs_diff_buckets(std::span<const MeasurementPair> pairs, std::array<double, 2> cuts) {
  if (!(cuts[0] >= 0.0 && cuts[0] <= cuts[1]))
    throw Error(ErrorCode::kInvalidArgument, "buckets: cuts must be ordered and non-negative");
  DiffBuckets b;
  b.cuts = cuts;
  b.n = pairs.size();
  for (const auto& p : pairs) {
    const double d = std::abs(p.remote - p.bedside);
    if (d < cuts[0] - kBucketTolerance) ++b.counts[0];
    else if (d <= cuts[1] + kBucketTolerance) ++b.counts[1];
    else ++b.counts[2];
  }
  if (b.n > 0)
    for (std::size_t i = 0; i < 3; ++i)
      b.percent[i] = 100.0 * static_cast<double>(b.counts[i]) / static_cast<double>(b.n);
  return b;
}

PairedTResult paired_t_test(std::span<const MeasurementPair> pairs) {
  const std::size_t n = pairs.size();
  if (n < 2) throw Error(ErrorCode::kTooFew, "paired t: need at least 2 pairs");
  const std::vector<double> d = diffs_of(pairs);
  const double m = mean_of(d);
  double ss = 0.0;
  for (double x : d) ss += (x - m) * (x - m);
  if (ss == 0.0) throw Error(ErrorCode::kDegenerateVariance, "paired t: differences have zero variance");
  PairedTResult r;
  r.n = n;
  r.mean_diff = m;
  r.sd_diff = std::sqrt(ss / static_cast<double>(n - 1));
  r.t = m / (r.sd_diff / std::sqrt(static_cast<double>(n)));
  r.p_value = student_t_two_sided_p(r.t, static_cast<double>(n - 1));
  return r;
}

// ---- report --------------------------------------------------------------------------------

std::vector<PatientPair> pair_records(std::span<const ExamRecord> records) {
  if (records.empty()) throw Error(ErrorCode::kUnpairedRecord, "no records");
  std::vector<std::string> order;
  std::map<std::string, std::array<std::vector<const ExamRecord*>, 2>> by_id;
  for (const auto& r : records) {
    auto [it, fresh] = by_id.try_emplace(r.patient_id);
    if (fresh) order.push_back(r.patient_id);
    it->second[static_cast<std::size_t>(r.arm)].push_back(&r);
  }
  std::vector<std::string> bad;
  std::vector<PatientPair> out;
  for (const auto& id : order) {
    const auto& arms = by_id[id];
    if (arms[0].size() != 1 || arms[1].size() != 1) {
      bad.push_back(id);
      continue;
    }
    out.push_back({*arms[0][0], *arms[1][0]});
  }
  if (!bad.empty()) {
    std::string msg = "unpaired records for patient(s):";
    for (const auto& id : bad) msg += " " + id;
    throw Error(ErrorCode::kUnpairedRecord, msg);
  }
  return out;
}

namespace {

// Evaluates `fn`; statistics that cannot be computed become {"value": null, "error": ...}.
ojson guarded(const std::function<ojson()>& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return ojson{{"value", nullptr}, {"error", error_code_name(e.code())}, {"message", e.what()}};
  }
}

ojson kappa_json(const KappaResult& k) {
  return {{"kappa", k.kappa}, {"se", k.se}, {"ci95", {k.ci95_lo, k.ci95_hi}},
          {"p_observed", k.p_observed}, {"p_expected", k.p_expected}};
}

ojson measurement_block(std::span<const MeasurementPair> pairs) {
  ojson j;
  j["n"] = pairs.size();
  j["pearson"] = guarded([&] {
    const auto r = pearson_r(pairs);
    return ojson{{"r", r.r}, {"p_value", r.p_value}};
  });
  j["icc_2_1"] = guarded([&] { return ojson(icc_2_1(pairs)); });
  j["relative_errors"] = guarded([&] {
    const auto re = relative_errors(pairs);
    return ojson{{"median", re.median},
                 {"min", re.min},
                 {"max", re.max},
                 {"frac_below_5pct", re.frac_below(0.05)},
                 {"frac_below_15pct", re.frac_below(0.15)},
                 {"errors", re.errors}};
  });
  const auto b = abs_diff_buckets(pairs);
  j["abs_diff_buckets"] = {{"cuts_m", b.cuts}, {"counts", b.counts}, {"percent", b.percent}};
  return j;
}

ojson detection_block(std::size_t bedside, std::size_t remote, std::size_t agree, std::size_t n) {
  return {{"bedside_positive", bedside},
          {"remote_positive", remote},
          {"concordant", agree},
          {"concordance", n == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(n)}};
}

double mean_or_zero(const std::vector<double>& v) { return v.empty() ? 0.0 : mean_of(v); }

double sd_or_zero(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

StudyReport campaign_report(std::span<const ExamRecord> records) {
  for (const auto& r : records) validate(r);
  const auto patients = pair_records(records);
  const std::size_t n = patients.size();

  std::size_t aaa_b = 0, aaa_r = 0, aaa_agree = 0;
  std::size_t th_b = 0, th_r = 0, th_agree = 0;
  std::vector<MeasurementPair> aorta, iliac, durations;
  std::vector<GradePair> grades;
  std::vector<double> dur_b, dur_r, q_b, q_r, a_b, a_r;

  for (const auto& [b, r] : patients) {
    aaa_b += b.aaa_detected;
    aaa_r += r.aaa_detected;
    aaa_agree += b.aaa_detected == r.aaa_detected;
    const bool tb = b.thrombus.value_or(false);
    const bool tr = r.thrombus.value_or(false);
    th_b += tb;
    th_r += tr;
    th_agree += tb == tr;
    if (b.ap_diameter && r.ap_diameter) aorta.push_back({*b.ap_diameter, *r.ap_diameter, b.site_id, b.patient_id});
    if (b.iliac_left && r.iliac_left) iliac.push_back({*b.iliac_left, *r.iliac_left, b.site_id, b.patient_id});
    if (b.iliac_right && r.iliac_right) iliac.push_back({*b.iliac_right, *r.iliac_right, b.site_id, b.patient_id});
    if (b.grade && r.grade) grades.push_back({*b.grade, *r.grade});
    durations.push_back({b.duration, r.duration, b.site_id, b.patient_id});
    dur_b.push_back(b.duration);
    dur_r.push_back(r.duration);
    q_b.push_back(b.quality_score);
    q_r.push_back(r.quality_score);
    a_b.push_back(b.acceptance_score);
    a_r.push_back(r.acceptance_score);
  }

  ojson j;
  j["n_patients"] = n;
  j["aaa"] = detection_block(aaa_b, aaa_r, aaa_agree, n);
  j["thrombus"] = detection_block(th_b, th_r, th_agree, n);
  j["aorta"] = measurement_block(aorta);
  j["iliac"] = measurement_block(iliac);

  const ContingencyTable gt = grade_table(grades);
  ojson grade;
  grade["n"] = grades.size();
  grade["categories"] = {grade_name(Grade::kNone), grade_name(Grade::kSegmentary), grade_name(Grade::kDiffuse)};
  grade["table_rows_bedside"] = gt;
  grade["kappa"] = guarded([&] { return kappa_json(cohen_kappa(gt)); });
  grade["kappa_linear_weighted"] = guarded([&] { return kappa_json(weighted_kappa(gt, KappaWeights::kLinear)); });
  j["grade"] = grade;

  ojson dur;
  dur["bedside_mean_s"] = mean_or_zero(dur_b);
  dur["bedside_sd_s"] = sd_or_zero(dur_b);
  dur["remote_mean_s"] = mean_or_zero(dur_r);
  dur["remote_sd_s"] = sd_or_zero(dur_r);
  dur["paired_t"] = guarded([&] {
    const auto t = paired_t_test(durations);
    return ojson{{"t", t.t}, {"p_value", t.p_value}, {"mean_diff_s", t.mean_diff}, {"sd_diff_s", t.sd_diff},
                 {"df", t.n - 1}};
  });
  j["duration"] = dur;

  j["scores"] = {{"modeled", false},
                 {"quality", {{"bedside_mean", mean_or_zero(q_b)}, {"remote_mean", mean_or_zero(q_r)}}},
                 {"acceptance", {{"bedside_mean", mean_or_zero(a_b)}, {"remote_mean", mean_or_zero(a_r)}}}};
  return {j};
}

namespace {

std::string num(const ojson& v, const char* spec = "{:.4f}") {
  if (v.is_number()) return fmt::format(fmt::runtime(spec), v.get<double>());
  return "n/a";
}

std::string stat_or_error(const ojson& block, const char* key, const char* spec = "{:.4f}") {
  if (block.contains("error")) return "n/a (" + block["error"].get<std::string>() + ")";
  return num(block[key], spec);
}

}  // namespace

std::string format_report_table(const StudyReport& report) {
  const auto& j = report.json;
  std::string out;
  auto line = [&](const std::string& label, const std::string& value) {
    out += fmt::format("{:<34} {}\n", label, value);
  };
  line("patients", std::to_string(j["n_patients"].get<std::size_t>()));
  for (const char* key : {"aaa", "thrombus"}) {
    const auto& d = j[key];
    line(std::string(key) + " detected (bedside/remote)",
         fmt::format("{}/{}  concordance {:.1f}%", d["bedside_positive"].get<std::size_t>(),
                     d["remote_positive"].get<std::size_t>(), 100.0 * d["concordance"].get<double>()));
  }
  for (const char* key : {"aorta", "iliac"}) {
    const auto& m = j[key];
    const std::string k(key);
    line(k + " pairs", std::to_string(m["n"].get<std::size_t>()));
    line(k + " pearson r", stat_or_error(m["pearson"], "r") + "  p " + stat_or_error(m["pearson"], "p_value", "{:.3g}"));
    line(k + " icc(2,1)", m["icc_2_1"].is_number() ? num(m["icc_2_1"]) : stat_or_error(m["icc_2_1"], "value"));
    line(k + " relative error median", stat_or_error(m["relative_errors"], "median"));
    const auto& b = m["abs_diff_buckets"];
    line(k + " |diff| <4 / 4-10 / >10 mm",
         fmt::format("{} / {} / {}", b["counts"][0].get<std::size_t>(), b["counts"][1].get<std::size_t>(),
                     b["counts"][2].get<std::size_t>()));
  }
  const auto& g = j["grade"];
  line("grade pairs", std::to_string(g["n"].get<std::size_t>()));
  const auto kappa_text = [&](const ojson& k) {
    if (k.contains("error")) return "n/a (" + k["error"].get<std::string>() + ")";
    return fmt::format("{:.3f}  95% CI [{:.3f}, {:.3f}]", k["kappa"].get<double>(), k["ci95"][0].get<double>(),
                       k["ci95"][1].get<double>());
  };
  line("grade kappa", kappa_text(g["kappa"]));
  line("grade kappa (linear weights)", kappa_text(g["kappa_linear_weighted"]));
  const auto& d = j["duration"];
  line("duration bedside mean/sd (s)",
       fmt::format("{:.1f} / {:.1f}", d["bedside_mean_s"].get<double>(), d["bedside_sd_s"].get<double>()));
  line("duration remote mean/sd (s)",
       fmt::format("{:.1f} / {:.1f}", d["remote_mean_s"].get<double>(), d["remote_sd_s"].get<double>()));
  line("duration paired t", stat_or_error(d["paired_t"], "t") + "  p " + stat_or_error(d["paired_t"], "p_value", "{:.3g}"));
  const auto& s = j["scores"];
  line("quality mean (bedside/remote)*",
       fmt::format("{:.1f} / {:.1f}", s["quality"]["bedside_mean"].get<double>(),
                   s["quality"]["remote_mean"].get<double>()));
  line("acceptance mean (bedside/remote)*",
       fmt::format("{:.1f} / {:.1f}", s["acceptance"]["bedside_mean"].get<double>(),
                   s["acceptance"]["remote_mean"].get<double>()));
  out += "* placeholder scores, not modeled\n";
  return out;
}

// ---- CSV -----------------------------------------------------------------------------------

namespace {

std::string opt_num(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    fields.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

}  // namespace

void write_records_csv(std::span<const ExamRecord> records, std::ostream& out) {
  for (std::size_t i = 0; i < kRecordColumns.size(); ++i) out << (i ? "," : "") << kRecordColumns[i];
  out << '\n';
  for (const auto& r : records) {
    validate(r);
    out << r.patient_id << ',' << r.site_id << ',' << arm_name(r.arm) << ','
        << (r.aaa_detected ? "true" : "false") << ',' << opt_num(r.ap_diameter) << ','
        << (r.thrombus ? (*r.thrombus ? "true" : "false") : "") << ',' << opt_num(r.iliac_left) << ','
        << opt_num(r.iliac_right) << ',' << (r.grade ? grade_name(*r.grade) : "") << ','
        << format_double(r.duration) << ',' << format_double(r.quality_score) << ','
        << format_double(r.acceptance_score) << '\n';
  }
}

std::vector<ExamRecord> read_records_csv(std::istream& in) {
  std::string line;
  std::size_t row = 0;
  auto fail = [&](std::size_t col, const std::string& what) -> void {
    const std::string where =
        col < kRecordColumns.size() ? ", column " + std::string(kRecordColumns[col]) : std::string();
    throw Error(ErrorCode::kParse, "records csv: row " + std::to_string(row) + where + ": " + what);
  };
  const auto strip_cr = [](std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };

  if (!std::getline(in, line)) {
    row = 1;
    fail(kRecordColumns.size(), "missing header row");
  }
  row = 1;
  strip_cr(line);
  const auto header = split_csv_line(line);
  if (header.size() != kRecordColumns.size()) fail(kRecordColumns.size(), "header must list the 12 record columns");
  for (std::size_t c = 0; c < kRecordColumns.size(); ++c)
    if (trim(header[c]) != kRecordColumns[c]) fail(c, "unexpected header '" + header[c] + "'");

  std::vector<ExamRecord> out;
  while (std::getline(in, line)) {
    ++row;
    strip_cr(line);
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != kRecordColumns.size())
      fail(kRecordColumns.size(), "expected 12 fields, found " + std::to_string(f.size()));

    auto number = [&](std::size_t c) {
      const auto v = parse_double(trim(f[c]));
      if (!v || !std::isfinite(*v)) fail(c, "not a number: '" + f[c] + "'");
      return *v;
    };
    auto opt_number = [&](std::size_t c) -> std::optional<double> {
      if (trim(f[c]).empty()) return std::nullopt;
      return number(c);
    };
    auto flag = [&](std::size_t c) {
      const auto s = trim(f[c]);
      if (s == "true") return true;
      if (s != "false") fail(c, "expected true or false, found '" + f[c] + "'");
      return false;
    };

    ExamRecord r;
    r.patient_id = std::string(trim(f[0]));
    if (r.patient_id.empty()) fail(0, "empty patient_id");
    r.site_id = std::string(trim(f[1]));
    const auto arm = trim(f[2]);
    if (arm == "bedside") r.arm = Arm::kBedside;
    else if (arm == "remote") r.arm = Arm::kRemote;
    else fail(2, "expected bedside or remote, found '" + f[2] + "'");
    r.aaa_detected = flag(3);
    r.ap_diameter = opt_number(4);
    if (!trim(f[5]).empty()) r.thrombus = flag(5);
    r.iliac_left = opt_number(6);
    r.iliac_right = opt_number(7);
    if (!trim(f[8]).empty()) {
      try {
        r.grade = parse_grade(trim(f[8]));
      } catch (const Error&) {
        fail(8, "unknown grade '" + f[8] + "'");
      }
    }
    r.duration = number(9);
    r.quality_score = number(10);
    r.acceptance_score = number(11);

    for (std::size_t c : {4u, 6u, 7u}) {
      const auto v = c == 4 ? r.ap_diameter : c == 6 ? r.iliac_left : r.iliac_right;
      if (v && !(*v > 0.0)) fail(c, "diameter must be positive");
    }
    if (r.duration < 0.0) fail(9, "duration must be >= 0");
    if (r.quality_score < 0.0 || r.quality_score > 100.0) fail(10, "score must lie in [0, 100]");
    if (r.acceptance_score < 0.0 || r.acceptance_score > 100.0) fail(11, "score must lie in [0, 100]");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace tersim
