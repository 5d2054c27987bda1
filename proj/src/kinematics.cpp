// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#include "tersim/kinematics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>

#include "tersim/error.hpp"

namespace tersim {

namespace {

const Eigen::Vector3d kDown{0.0, 0.0, -1.0};

// Slack allowed above max_tilt before a correction is applied; keeps clamping idempotent
// when the corrected quaternion lands a few ulps past the limit.
constexpr double kTiltSlack = 1e-12;

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

}  // namespace

bool Pose::is_finite() const {
  return position.allFinite() && orientation.coeffs().allFinite();
}

Eigen::Vector3d Pose::axis() const { return orientation * kDown; }

double Pose::tilt() const {
  const Eigen::Vector3d a = axis();
  return std::atan2(std::hypot(a.x(), a.y()), -a.z());
}

Pose make_station_pose(double x, double y, double z, double tilt) {
  Pose p;
  p.position = {x, y, z};
  p.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(tilt, Eigen::Vector3d::UnitX()));
  return p;
}

bool Workspace::contains(const Eigen::Vector3d& p) const {
  return ((p - center).cwiseAbs().array() <= half_extents.array()).all();
}

bool CableRig::contains(const Eigen::Vector2d& xy) const {
  int sign = 0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto& a = anchors[i];
    const auto& b = anchors[(i + 1) % anchors.size()];
    const double c = cross2(b - a, xy - a);
    if (c == 0.0) return false;
    const int s = c > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

double CableRig::diagonal() const {
  double d = 0.0;
  for (const auto& a : anchors)
    for (const auto& b : anchors) d = std::max(d, (a - b).norm());
  return d;
}

Pose clamp_to_workspace(const Pose& p, const Workspace& w, const FineStageLimits& f) {
  if (!p.is_finite()) throw Error(ErrorCode::kInvalidPose, "pose has non-finite components");
  const double n = p.orientation.norm();
  if (n == 0.0) throw Error(ErrorCode::kInvalidPose, "pose orientation is a zero quaternion");

  Pose out = p;
  if (std::abs(n - 1.0) > 1e-12) out.orientation.coeffs() /= n;

  Eigen::Vector3d half = w.half_extents;
  half.z() = std::min(half.z(), 0.5 * f.z_range);
  for (int i = 0; i < 3; ++i)
    out.position[i] = std::clamp(out.position[i], w.center[i] - half[i], w.center[i] + half[i]);

  const double tilt = out.tilt();
  if (tilt > f.max_tilt + kTiltSlack) {
    const Eigen::Vector3d a = out.axis();
    Eigen::Vector3d hinge = a.cross(kDown);
    if (hinge.norm() < 1e-15) hinge = Eigen::Vector3d::UnitX();
    const Eigen::AngleAxisd correction(tilt - f.max_tilt, hinge.normalized());
    out.orientation = (Eigen::Quaterniond(correction) * out.orientation).normalized();
  }
  return out;
}

CableLengths inverse_kinematics(const Eigen::Vector2d& xy, const CableRig& rig) {
  if (!xy.allFinite() || !rig.contains(xy))
    throw Error(ErrorCode::kOutOfRig, "ring position outside the anchor quadrilateral");
  CableLengths l{};
  for (std::size_t i = 0; i < 4; ++i) l[i] = (rig.anchors[i] - xy).norm() - rig.ring_attach_radius;
  return l;
}

ForwardSolution forward_kinematics(const CableLengths& l, const CableRig& rig) {
  std::array<double, 4> reach{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!std::isfinite(l[i]) || l[i] <= 0.0)
      throw Error(ErrorCode::kInconsistentLengths, "strap lengths must be positive");
    reach[i] = l[i] + rig.ring_attach_radius;
  }

  // Differences of the squared range equations are linear in xy.
  const auto& a0 = rig.anchors[0];
  Eigen::Matrix<double, 3, 2> A;
  Eigen::Vector3d b;
  for (int i = 1; i < 4; ++i) {
    const auto& ai = rig.anchors[i];
    A.row(i - 1) = 2.0 * (ai - a0).transpose();
    b[i - 1] = ai.squaredNorm() - a0.squaredNorm() - reach[i] * reach[i] + reach[0] * reach[0];
  }
  const auto qr = A.colPivHouseholderQr();
  if (qr.rank() < 2)
    throw Error(ErrorCode::kInconsistentLengths, "anchor geometry leaves the ring position ambiguous");
  Eigen::Vector2d p = qr.solve(b);

  // Gauss-Newton on the unsquared residuals.
  for (int iter = 0; iter < 50; ++iter) {
    Eigen::Matrix<double, 4, 2> J;
    Eigen::Vector4d r;
    for (int i = 0; i < 4; ++i) {
      const Eigen::Vector2d d = p - rig.anchors[i];
      const double dist = d.norm();
      if (dist == 0.0)
        throw Error(ErrorCode::kInconsistentLengths, "ring coincides with an anchor");
      J.row(i) = (d / dist).transpose();
      r[i] = dist - reach[i];
    }
    const Eigen::Vector2d step = (J.transpose() * J).ldlt().solve(-J.transpose() * r);
    p += step;
    if (step.norm() < 1e-16) break;
  }

  double residual = 0.0;
  for (int i = 0; i < 4; ++i)
    residual = std::max(residual, std::abs((p - rig.anchors[i]).norm() - reach[i]));
  if (!p.allFinite() || residual > kFkTolerance || !rig.contains(p))
    throw Error(ErrorCode::kInconsistentLengths,
                "strap lengths are not consistent with any ring position (residual " +
                    std::to_string(residual) + " m)");
  return {p, residual};
}

Pose step_toward(const Pose& current, const Pose& target, double dt, double v_max, double w_max,
                 const Workspace& w, const FineStageLimits& f) {
  if (!(dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "step_toward needs dt > 0");
  if (!current.is_finite() || !target.is_finite())
    throw Error(ErrorCode::kInvalidPose, "pose has non-finite components");

  Pose next;
  const Eigen::Vector3d delta = target.position - current.position;
  const double dist = delta.norm();
  const double max_move = v_max * dt;
  next.position = dist <= max_move ? target.position
                                   : Eigen::Vector3d(current.position + delta * (max_move / dist));

  const double angle = current.orientation.angularDistance(target.orientation);
  const double max_turn = w_max * dt;
  next.orientation = angle <= max_turn
                         ? target.orientation
                         : current.orientation.slerp(max_turn / angle, target.orientation);
  return clamp_to_workspace(next, w, f);
}

}  // namespace tersim
