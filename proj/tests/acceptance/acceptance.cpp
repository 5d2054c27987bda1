// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion; exits non-zero on any FAIL.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <fmt/core.h>

#include "random_message.hpp"
#include "tersim/error.hpp"
#include "tersim/exam.hpp"
#include "tersim/kinematics.hpp"
#include "tersim/protocol.hpp"
#include "tersim/scenario.hpp"
#include "tersim/session.hpp"
#include "tersim/stats.hpp"

using namespace tersim;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using Q = boost::multiprecision::cpp_rational;

namespace {

const fs::path kRoot = TERSIM_SOURCE_DIR;
const std::vector<std::string> kPresets = {"vthd", "dsl", "satellite"};

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<Scenario> bundled_scenarios() {
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(kRoot / "scenarios"))
    if (e.path().extension() == ".yaml") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  std::vector<Scenario> out;
  for (const auto& p : paths) out.push_back(load_scenario(p));
  return out;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

// ---- kinematics ------------------------------------------------------------------------

Outcome kinematics() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20070601);
  const Workspace w;
  std::uniform_real_distribution<double> ux(-w.half_extents.x(), w.half_extents.x());
  std::uniform_real_distribution<double> uy(-w.half_extents.y(), w.half_extents.y());
  double worst = 0.0;
  for (int i = 0; i < 10'000; ++i) {
    const Eigen::Vector2d xy{ux(rng), uy(rng)};
    const auto fk = forward_kinematics(inverse_kinematics(xy));
    worst = std::max(worst, (fk.xy - xy).norm());
  }
  o.require(worst < 1e-9, fmt::format("FK(IK) error {:.3g} m", worst));

  std::uniform_real_distribution<double> wide(-0.3, 0.3);
  std::normal_distribution<double> g;
  int clamp_mismatch = 0;
  for (int i = 0; i < 10'000; ++i) {
    Pose p;
    p.position = {wide(rng), wide(rng), wide(rng)};
    p.orientation = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized();
    const Pose once = clamp_to_workspace(p);
    if (!(clamp_to_workspace(once) == once)) ++clamp_mismatch;
  }
  o.require(clamp_mismatch == 0, fmt::format("{} clamp idempotence mismatches", clamp_mismatch));
  const double elapsed = seconds_since(t0);
  o.require(elapsed < 1.0, fmt::format("runtime {:.2f} s", elapsed));
  if (o.ok) o.detail = fmt::format("max FK(IK) error {:.2e} m, clamp idempotent on 10000 poses, {:.3f} s", worst, elapsed);
  return o;
}

// ---- protocol --------------------------------------------------------------------------

Outcome protocol() {
  Outcome o;
  std::mt19937_64 rng(5);
  std::size_t mismatches = 0, accepted_corrupt = 0;
  for (int i = 0; i < 100'000; ++i) {
    const Message m = tersim::testing::random_message(rng);
    const auto seq = static_cast<std::uint32_t>(rng());
    const std::uint64_t ts = rng();
    const auto bytes = encode(m, seq, ts);
    try {
      if (!(decode(bytes) == Envelope{seq, ts, m})) ++mismatches;
    } catch (const Error&) {
      ++mismatches;
    }
    auto flipped = bytes;
    const auto bit = rng() % (flipped.size() * 8);
    flipped[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    try {
      decode(flipped);
      ++accepted_corrupt;
    } catch (const Error&) {
    }
  }
  o.require(mismatches == 0, fmt::format("{} roundtrip mismatches", mismatches));
  o.require(accepted_corrupt == 0, fmt::format("{} corrupted messages accepted", accepted_corrupt));

  std::size_t untyped = 0;
  for (int i = 0; i < 100'000; ++i) {
    std::vector<std::uint8_t> v(rng() % 96);
    for (auto& x : v) x = static_cast<std::uint8_t>(rng());
    if (v.size() >= 3 && (rng() & 1)) {
      v[0] = 'T';
      v[1] = 'R';
      v[2] = kProtocolVersion;
    }
    try {
      decode(v);
    } catch (const Error&) {
    } catch (...) {
      ++untyped;
    }
  }
  o.require(untyped == 0, fmt::format("{} random inputs raised untyped exceptions", untyped));
  const auto hb = encode(Heartbeat{}, 0, 0).size();
  o.require(hb == 24, fmt::format("heartbeat is {} bytes", hb));
  if (o.ok) o.detail = "100000 roundtrips exact, 100000 bit flips rejected, 100000 random inputs typed, heartbeat 24 bytes";
  return o;
}

// ---- safety ----------------------------------------------------------------------------

Outcome safety() {
  Outcome o;
  const SessionConfig cfg;
  const Workspace w;
  std::size_t runs = 0, ticks = 0, halts = 0;
  double max_force = 0.0;
  SimTime worst_halt_latency{0};
  for (const auto& sc : bundled_scenarios()) {
    for (const auto& preset : kPresets) {
      const auto tr = run_session(sc, apply_channel_preset(sc.channel, preset), sc.seed);
      ++runs;
      bool was_halted = false;
      for (const auto& t : tr.ticks) {
        ++ticks;
        const double f = t.rendered_force.norm();
        max_force = std::max(max_force, f);
        o.require(f <= kForceCap, fmt::format("{}/{}: rendered force {:.3f} N at t={} us", sc.name, preset, f, t.t.count()));
        o.require(w.contains(t.slave_probe.position), fmt::format("{}/{}: slave outside workspace at t={} us", sc.name, preset, t.t.count()));
        const SimTime silent = t.t - t.slave_last_heartbeat;
        if (t.slave_established && silent > kSafeStopAfter + cfg.tick)
          o.require(t.halted, fmt::format("{}/{}: no halt after {} us of silence", sc.name, preset, silent.count()));
        if (t.halted && !was_halted) {
          ++halts;
          worst_halt_latency = std::max(worst_halt_latency, silent);
        }
        was_halted = t.halted;
      }
    }
  }
  o.require(halts > 0, "no scenario exercised heartbeat loss");
  o.require(worst_halt_latency <= kSafeStopAfter + cfg.tick,
            fmt::format("halt {} us after the last heartbeat", worst_halt_latency.count()));
  if (o.ok)
    o.detail = fmt::format("{} sessions, {} ticks, max rendered force {:.3f} N, {} halts, worst halt {} ms after last heartbeat",
                           runs, ticks, max_force, halts, worst_halt_latency.count() / 1000.0);
  return o;
}

// ---- phantom / measurement -------------------------------------------------------------

Outcome phantom_measurement() {
  Outcome o;
  const Scenario sc = load_scenario(kRoot / "scenarios/aaa_54mm.yaml");
  // Analytic: the Gaussian bulge peaks at its center with twice the peak radius.
  const double analytic = 2.0 * sc.phantom.aneurysm->peak_radius;
  o.require(std::abs(analytic - 0.054) < 1e-15, "preset is not 54 mm");
  const auto r = run_exam(sc, sc.channel, sc.seed, "P001", "site-1");
  o.require(r.remote_record.has_value() && r.remote_record->ap_diameter.has_value(), "remote arm produced no diameter");
  if (!o.ok) return o;
  const double got = *r.remote_record->ap_diameter;
  o.require(std::abs(got - analytic) <= 0.001, fmt::format("remote AP {:.2f} mm", got * 1e3));
  if (o.ok) o.detail = fmt::format("remote AP {:.2f} mm vs analytic {:.1f} mm", got * 1e3, analytic * 1e3);
  return o;
}

// ---- synthetic study -------------------------------------------------------------------

Outcome synthetic_study() {
  Outcome o;
  const CohortSpec spec;
  const auto t0 = Clock::now();
  const auto a = run_campaign(spec);
  const double elapsed = seconds_since(t0);
  const auto b = run_campaign(spec);
  o.require(a.records_csv == b.records_csv, "campaign records differ between runs");

  std::map<std::string, GroundTruth> truth(a.truths.begin(), a.truths.end());
  std::size_t aaa = 0, aaa_both = 0, thr = 0, thr_both = 0;
  for (const auto& p : pair_records(a.records)) {
    const auto& gt = truth.at(p.bedside.patient_id);
    if (gt.has_aaa) {
      ++aaa;
      aaa_both += p.bedside.aaa_detected && p.remote.aaa_detected;
      if (gt.has_thrombus) {
        ++thr;
        thr_both += p.bedside.thrombus.value_or(false) && p.remote.thrombus.value_or(false);
      }
    }
  }
  o.require(aaa == 8, fmt::format("{} AAA among completed exams", aaa));
  o.require(aaa_both == aaa, fmt::format("{}/{} AAA detected in both arms", aaa_both, aaa));
  o.require(thr_both == thr, fmt::format("{}/{} thrombi detected in both arms", thr_both, thr));
  const auto& rep = a.report.json;
  const double r = rep["aorta"]["pearson"]["r"].get<double>();
  const double kappa = rep["grade"]["kappa"]["kappa"].get<double>();
  o.require(r >= 0.95, fmt::format("aorta r {:.4f}", r));
  o.require(kappa >= 0.8, fmt::format("grade kappa {:.3f}", kappa));
  std::size_t bucketed = 0;
  for (const auto& c : rep["aorta"]["abs_diff_buckets"]["counts"]) bucketed += c.get<std::size_t>();
  o.require(bucketed == rep["aorta"]["n"].get<std::size_t>(), "diameter differences missing from buckets");
  o.require(elapsed < 60.0, fmt::format("runtime {:.1f} s", elapsed));
  if (o.ok)
    o.detail = fmt::format("{} completed, AAA {}/{} both arms, thrombus {}/{}, r {:.4f}, kappa {:.3f}, {} diffs bucketed, deterministic, {:.1f} s",
                           a.records.size() / 2, aaa_both, aaa, thr_both, thr, r, kappa, bucketed, elapsed);
  return o;
}

// ---- stats oracles ---------------------------------------------------------------------

double to_d(const Q& q) { return static_cast<double>(q); }

double oracle_kappa(const std::vector<std::vector<int>>& t, const std::function<Q(int, int)>& w) {
  const int k = static_cast<int>(t.size());
  Q n = 0;
  for (const auto& row : t)
    for (int v : row) n += v;
  Q po = 0, pe = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      Q ri = 0, cj = 0;
      for (int m = 0; m < k; ++m) {
        ri += t[i][m];
        cj += t[m][j];
      }
      po += w(i, j) * t[i][j] / n;
      pe += w(i, j) * ri * cj / (n * n);
    }
  return to_d((po - pe) / (1 - pe));
}

double oracle_pearson(const std::vector<std::pair<int, int>>& xy) {
  Q mx = 0, my = 0;
  for (auto [x, y] : xy) {
    mx += x;
    my += y;
  }
  mx /= static_cast<int>(xy.size());
  my /= static_cast<int>(xy.size());
  Q sxx = 0, syy = 0, sxy = 0;
  for (auto [x, y] : xy) {
    sxx += (x - mx) * (x - mx);
    syy += (y - my) * (y - my);
    sxy += (x - mx) * (y - my);
  }
  const double r2 = to_d(sxy * sxy / (sxx * syy));
  return sxy < 0 ? -std::sqrt(r2) : std::sqrt(r2);
}

double quadrature_two_sided_p(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * std::acos(-1.0));
  auto pdf = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
  const double inner = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(pdf, 0.0, std::abs(t), 12, 1e-13);
  return 1.0 - 2.0 * inner;
}

std::vector<MeasurementPair> pairs(std::initializer_list<std::pair<double, double>> v) {
  std::vector<MeasurementPair> out;
  for (auto [b, r] : v) out.push_back({b, r, "", ""});
  return out;
}

Outcome stats_oracles(double& simple_kappa_out) {
  Outcome o;
  auto close = [&](double got, double want, double tol, const std::string& what) {
    o.require(std::abs(got - want) <= tol, fmt::format("{}: {:.15g} vs oracle {:.15g}", what, got, want));
  };
  close(pearson_r(pairs({{1, 2}, {2, 4}, {3, 6}})).r, oracle_pearson({{1, 2}, {2, 4}, {3, 6}}), 1e-12, "pearson perfect");
  close(pearson_r(pairs({{1, 1}, {2, 3}, {3, 2}})).r, oracle_pearson({{1, 1}, {2, 3}, {3, 2}}), 1e-12, "pearson 0.5");

  auto identity = [](int i, int j) { return i == j ? Q(1) : Q(0); };
  close(cohen_kappa({{20, 5}, {10, 15}}).kappa, oracle_kappa({{20, 5}, {10, 15}}, identity), 1e-12, "kappa 2x2");
  close(cohen_kappa({{7, 0, 0}, {0, 3, 0}, {0, 0, 9}}).kappa, oracle_kappa({{7, 0, 0}, {0, 3, 0}, {0, 0, 9}}, identity), 1e-12,
        "kappa diagonal");

  const auto re = relative_errors(pairs({{0.020, 0.022}, {0.020, 0.014}}));
  close(re.errors[0], to_d((Q(22) - 20) / 20), 1e-12, "relative error +10%");
  close(re.errors[1], to_d((Q(14) - 20) / 20), 1e-12, "relative error -30%");

  const auto bk = abs_diff_buckets(pairs({{0.020, 0.0239}, {0.020, 0.024}}));
  o.require(bk.counts[0] == 1 && bk.counts[1] == 1, "bucket boundary at 4 mm");

  const auto t1 = paired_t_test(pairs({{0, 1}, {0, 2}, {0, 3}}));
  // mean 2, sd 1, n 3: t = 2 / (1 / sqrt 3).
  close(t1.t, 2.0 * std::sqrt(3.0), 1e-12, "paired t diffs 1,2,3");
  close(t1.p_value, quadrature_two_sided_p(t1.t, 2), 1e-9, "paired t p");
  const auto t0 = paired_t_test(pairs({{0, -1}, {0, 1}}));
  close(t0.t, 0.0, 1e-12, "paired t diffs -1,1");
  close(t0.p_value, 1.0, 1e-12, "paired t p = 1");

  double worst_t = 0.0;
  for (double df = 1; df <= 200; df += 1)
    for (double t : {0.1, 0.7, 1.5, 2.0, 3.0, 6.0}) {
      const double d = std::abs(student_t_two_sided_p(t, df) - quadrature_two_sided_p(t, df));
      worst_t = std::max(worst_t, d);
    }
  o.require(worst_t <= 1e-9, fmt::format("Student t tail off by {:.3g}", worst_t));

  // Reconstructed grade table, rows bedside: none, segmentary, diffuse.
  const std::vector<std::vector<int>> t{{14, 0, 0}, {2, 8, 1}, {0, 4, 24}};
  ContingencyTable ct;
  for (const auto& row : t) ct.emplace_back(row.begin(), row.end());
  const auto simple = cohen_kappa(ct);
  const auto linear = weighted_kappa(ct, KappaWeights::kLinear);
  close(simple.kappa, oracle_kappa(t, identity), 1e-12, "simple kappa of grade table");
  close(linear.kappa, oracle_kappa(t, [](int i, int j) { return 1 - Q(std::abs(i - j), 2); }), 1e-12,
        "linear kappa of grade table");
  simple_kappa_out = simple.kappa;
  o.require(std::abs(linear.kappa - 0.84) <= 0.02, fmt::format("linear-weighted kappa {:.4f}", linear.kappa));
  if (o.ok)
    o.detail = fmt::format(
        "all examples within 1e-12, t tails within {:.1e}; grade table kappa {:.4f} (linear weights, +-{:.4f}) vs 0.84",
        worst_t, linear.kappa, linear.ci95_hi - linear.kappa);
  return o;
}

// ---- latency ---------------------------------------------------------------------------

Outcome latency() {
  Outcome o;
  std::size_t compared = 0;
  for (const auto& sc : bundled_scenarios()) {
    const auto fast = run_session(sc, apply_channel_preset(sc.channel, "vthd"), sc.seed);
    const auto slow = run_session(sc, apply_channel_preset(sc.channel, "satellite"), sc.seed);
    o.require(fast.completed && slow.completed, sc.name + ": session did not complete");
    o.require(fast.measurements.size() == slow.measurements.size(), sc.name + ": measurement count differs");
    if (!o.ok) return o;
    for (std::size_t i = 0; i < fast.measurements.size(); ++i) {
      o.require(same_bits(fast.measurements[i].value, slow.measurements[i].value) &&
                    fast.measurements[i].thrombus_seen == slow.measurements[i].thrombus_seen,
                fmt::format("{}: measurement {} differs", sc.name, i));
      ++compared;
    }
    o.require(slow.duration > fast.duration, sc.name + ": satellite session not longer");
  }
  if (o.ok) o.detail = fmt::format("{} measurements bit-identical across vthd and satellite; durations differ", compared);
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.ok;
    std::cout << (o.ok ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  };
  double simple_kappa = 0.0;
  report("kinematics", kinematics);
  report("protocol", protocol);
  report("safety", safety);
  report("phantom-measurement", phantom_measurement);
  report("synthetic-study", synthetic_study);
  report("stats-oracles", [&] { return stats_oracles(simple_kappa); });
  std::cout << "     note: unweighted kappa of the same table is " << fmt::format("{:.4f}", simple_kappa) << std::endl;
  report("latency-non-distortion", latency);
  return failures == 0 ? 0 : 1;
}
