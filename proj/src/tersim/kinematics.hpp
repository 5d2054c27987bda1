// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace tersim {

// Exam frame: x lateral, y craniocaudal, z out of the body. The body surface is z = 0.
// The probe looks along its local -z axis; its image plane is spanned by local x and -z.
struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  bool operator==(const Pose& o) const {
    return position == o.position && orientation.coeffs() == o.orientation.coeffs();
  }

  bool is_finite() const;

  // Direction the probe is pointing, in the exam frame.
  Eigen::Vector3d axis() const;

  // Angle between the probe axis and -z.
  double tilt() const;
};

// Builds a probe pose at (x, y, z) leaning by `tilt` radians about the x axis.
Pose make_station_pose(double x, double y, double z, double tilt = 0.0);

struct Workspace {
  Eigen::Vector3d half_extents{0.08, 0.065, 0.065};
  Eigen::Vector3d center = Eigen::Vector3d::Zero();

  bool contains(const Eigen::Vector3d& p) const;
};

struct FineStageLimits {
  double max_tilt = 0.7853981633974483;  // 45 degrees
  double z_range = 0.13;
};

struct CableRig {
  // Convex order, clockwise when viewed from +z.
  std::array<Eigen::Vector2d, 4> anchors{
      Eigen::Vector2d{0.20, 0.20}, Eigen::Vector2d{0.20, -0.20},
      Eigen::Vector2d{-0.20, -0.20}, Eigen::Vector2d{-0.20, 0.20}};
  double ring_attach_radius = 0.0;

  bool contains(const Eigen::Vector2d& xy) const;
  double diagonal() const;
};

using CableLengths = std::array<double, 4>;

struct ForwardSolution {
  Eigen::Vector2d xy;
  double residual;  // max |model length - measured length| over the four straps
};

inline constexpr double kFkTolerance = 1e-6;

// Throws Error(kInvalidPose) on non-finite input.
Pose clamp_to_workspace(const Pose& p, const Workspace& w = {}, const FineStageLimits& f = {});

// Throws Error(kOutOfRig) when xy is not strictly inside the anchor quadrilateral.
CableLengths inverse_kinematics(const Eigen::Vector2d& xy, const CableRig& rig = {});

// Least-squares ring position over all four straps. Throws Error(kInconsistentLengths)
// when the best fit leaves a residual above kFkTolerance.
ForwardSolution forward_kinematics(const CableLengths& l, const CableRig& rig = {});

// Rate-limited motion of the slave toward `target`. dt in seconds, v_max in m/s, w_max in rad/s.
Pose step_toward(const Pose& current, const Pose& target, double dt, double v_max, double w_max,
                 const Workspace& w = {}, const FineStageLimits& f = {});

}  // namespace tersim
