// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "tersim/error.hpp"
#include "tersim/kinematics.hpp"

using namespace tersim;

namespace {

// Plain distance from an anchor to the ring center.
double strap(double ax, double ay, double x, double y) { return std::sqrt((ax - x) * (ax - x) + (ay - y) * (ay - y)); }

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

TEST_CASE("clamp pulls an outside point onto the box face") {
  Pose p;
  p.position = {0.20, 0.0, 0.0};
  const Pose c = clamp_to_workspace(p);
  CHECK(c.position.x() == 0.08);
  CHECK(c.position.y() == 0.0);
  CHECK(c.position.z() == 0.0);
}

TEST_CASE("clamp leaves an interior vertical pose unchanged") {
  Pose p;
  CHECK(clamp_to_workspace(p) == p);
}

TEST_CASE("clamp limits tilt to 45 degrees and keeps the azimuth") {
  const double sixty = std::numbers::pi / 3.0;
  const Pose p = make_station_pose(0.0, 0.0, 0.0, sixty);
  const Pose c = clamp_to_workspace(p);
  // Tilt recomputed from the quaternion: angle between the probe axis and -z.
  const Eigen::Vector3d axis = c.orientation * Eigen::Vector3d(0, 0, -1);
  const double tilt = std::acos(std::clamp(-axis.z(), -1.0, 1.0));
  CHECK(tilt == doctest::Approx(std::numbers::pi / 4.0).epsilon(1e-12));
  const Eigen::Vector3d before = p.orientation * Eigen::Vector3d(0, 0, -1);
  CHECK(std::atan2(axis.y(), axis.x()) == doctest::Approx(std::atan2(before.y(), before.x())).epsilon(1e-12));
}

TEST_CASE("clamp rejects non-finite poses") {
  Pose p;
  p.position.x() = std::numeric_limits<double>::quiet_NaN();
  CHECK(code_of([&] { clamp_to_workspace(p); }) == ErrorCode::kInvalidPose);
  Pose q;
  q.orientation.coeffs().setZero();
  CHECK(code_of([&] { clamp_to_workspace(q); }) == ErrorCode::kInvalidPose);
}

TEST_CASE("clamp is an idempotent projection for far and tilted inputs") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> far(-1.0, 1.0);
  std::normal_distribution<double> g;
  const Workspace w;
  const FineStageLimits f;
  for (int i = 0; i < 2000; ++i) {
    Pose p;
    p.position = {far(rng), far(rng), far(rng)};
    p.orientation = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized();
    const Pose c = clamp_to_workspace(p);
    CHECK(w.contains(c.position));
    CHECK(c.tilt() <= f.max_tilt + 1e-9);
    CHECK(clamp_to_workspace(c) == c);
  }
}

TEST_CASE("inverse kinematics at the center gives four equal straps") {
  const auto l = inverse_kinematics({0.0, 0.0});
  for (double v : l) CHECK(v == doctest::Approx(std::sqrt(0.08)).epsilon(1e-15));
  CHECK(std::sqrt(0.08) == doctest::Approx(0.282843).epsilon(1e-6));
}

TEST_CASE("inverse kinematics off center matches hand distances") {
  const auto l = inverse_kinematics({0.05, 0.0});
  const CableRig rig;
  int short_straps = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& a = rig.anchors[i];
    CHECK(l[i] == doctest::Approx(strap(a.x(), a.y(), 0.05, 0.0)).epsilon(1e-15));
    if (a.x() > 0) {
      CHECK(l[i] == doctest::Approx(0.25).epsilon(1e-15));
      ++short_straps;
    } else {
      CHECK(l[i] == doctest::Approx(std::sqrt(0.1025)).epsilon(1e-15));
    }
  }
  CHECK(short_straps == 2);
}

TEST_CASE("inverse kinematics outside the anchors is out of rig") {
  CHECK(code_of([] { inverse_kinematics({0.30, 0.0}); }) == ErrorCode::kOutOfRig);
  CHECK(code_of([] { inverse_kinematics({0.20, 0.0}); }) == ErrorCode::kOutOfRig);
}

TEST_CASE("forward kinematics inverts the worked examples") {
  const double c = std::sqrt(0.08);
  auto s = forward_kinematics({c, c, c, c});
  CHECK(std::abs(s.xy.x()) < 1e-12);
  CHECK(std::abs(s.xy.y()) < 1e-12);

  const CableRig rig;
  CableLengths l{};
  for (std::size_t i = 0; i < 4; ++i) l[i] = rig.anchors[i].x() > 0 ? 0.25 : std::sqrt(0.1025);
  s = forward_kinematics(l);
  CHECK(s.xy.x() == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(std::abs(s.xy.y()) < 1e-12);
  CHECK(s.residual < 1e-12);
}

TEST_CASE("forward kinematics rejects impossible lengths") {
  CHECK(code_of([] { forward_kinematics({0.01, 0.01, 0.01, 0.01}); }) == ErrorCode::kInconsistentLengths);
}

TEST_CASE("FK of IK is the identity over random workspace points") {
  std::mt19937_64 rng(3);
  const Workspace w;
  std::uniform_real_distribution<double> ux(-w.half_extents.x(), w.half_extents.x());
  std::uniform_real_distribution<double> uy(-w.half_extents.y(), w.half_extents.y());
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Eigen::Vector2d p{ux(rng), uy(rng)};
    worst = std::max(worst, (forward_kinematics(inverse_kinematics(p)).xy - p).norm());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("IK lengths stay positive and below the anchor diagonal") {
  const CableRig rig;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.199, 0.199);
  for (int i = 0; i < 1000; ++i) {
    const auto l = inverse_kinematics({u(rng), u(rng)});
    for (double v : l) {
      CHECK(v > 0.0);
      CHECK(v <= rig.diagonal());
    }
  }
}

TEST_CASE("step toward stays put at the target") {
  const Pose p = make_station_pose(0.01, 0.02, -0.002);
  CHECK(step_toward(p, p, 0.1, 0.05, 0.5) == p);
}

TEST_CASE("step toward is rate limited along the straight line") {
  const Pose a = make_station_pose(0.0, 0.0, 0.0);
  const Pose b = make_station_pose(0.01, 0.0, 0.0);
  const Pose s = step_toward(a, b, 0.1, 0.05, 0.5);
  CHECK(s.position.x() == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(std::abs(s.position.y()) < 1e-15);
}

TEST_CASE("step toward lands exactly on a reachable target") {
  const Pose a = make_station_pose(0.0, 0.0, 0.0);
  const Pose b = make_station_pose(0.001, 0.0, 0.0);
  CHECK(step_toward(a, b, 0.1, 0.05, 0.5) == b);
}

TEST_CASE("step toward limits the rotation rate") {
  const Pose a = make_station_pose(0.0, 0.0, 0.0, 0.0);
  const Pose b = make_station_pose(0.0, 0.0, 0.0, 0.6);
  const Pose s = step_toward(a, b, 0.1, 0.05, 0.5);
  CHECK(a.orientation.angularDistance(s.orientation) == doctest::Approx(0.05).epsilon(1e-9));
}
