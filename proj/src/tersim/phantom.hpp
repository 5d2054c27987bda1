// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tersim/kinematics.hpp"

namespace tersim {

enum class Grade : std::uint8_t { kNone = 0, kSegmentary = 1, kDiffuse = 2 };

const char* grade_name(Grade g) noexcept;
Grade parse_grade(std::string_view s);  // throws Error(kParse)

enum class Side : std::uint8_t { kLeft = 0, kRight = 1 };

// Gaussian fusiform bulge on the aorta.
struct Aneurysm {
  double center_y = 0.0;
  double peak_radius = 0.0;
  double sigma = 0.015;

  bool operator==(const Aneurysm&) const = default;
};

// Mural clot occupying the outer `fraction` of the lumen radius for y in [y_min, y_max].
struct Thrombus {
  double fraction = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;

  bool operator==(const Thrombus&) const = default;
};

// The aorta runs along +y at x = 0 from the bifurcation upward; the iliacs leave the
// bifurcation caudally at +-iliac_angle from -y, left iliac toward +x.
struct PhantomConfig {
  double aorta_depth = 0.06;
  double aorta_base_radius = 0.010;
  std::optional<Aneurysm> aneurysm;
  std::optional<Thrombus> thrombus;
  double bifurcation_y = -0.02;
  std::array<double, 2> iliac_radius{0.0055, 0.0055};  // indexed by Side
  double iliac_angle = 0.4;
  Grade atheromatosis_grade = Grade::kNone;
  std::array<double, 2> segmentary_extent_y{0.0, 0.025};
  double stiffness = 800.0;
  std::uint64_t rng_seed = 1;

  bool operator==(const PhantomConfig&) const = default;
};

// Throws Error(kInvalidArgument) naming the first violated constraint.
void validate(const PhantomConfig& cfg);

struct GroundTruth {
  bool has_aaa = false;
  double max_ap_diameter = 0.0;
  double max_ap_y = 0.0;
  bool has_thrombus = false;
  bool iliac_extension = false;
  std::array<double, 2> iliac_ap_diameters{};
  Grade grade = Grade::kNone;
};

inline constexpr double kAaaThreshold = 0.03;

struct UsFrame {
  int width = 0;
  int height = 0;
  double pixel_spacing = 0.0;
  std::vector<std::uint8_t> intensities;  // row-major, row 0 at the probe face
  Pose pose;
  std::uint32_t frame_id = 0;
  bool frozen = false;

  std::uint8_t at(int col, int row) const {
    return intensities[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
                       static_cast<std::size_t>(col)];
  }
};

struct Pixel {
  int col = 0;
  int row = 0;
  bool operator==(const Pixel&) const = default;
};

namespace render {
inline constexpr int kFrameSize = 256;
inline constexpr double kPixelSpacing = 0.0005;
inline constexpr double kWallThickness = 0.0015;
inline constexpr double kMaxContactGap = 0.005;
// Intensity bands. Lumen and wall never overlap the background or clot bands.
inline constexpr std::uint8_t kLumenMax = 29;
inline constexpr std::uint8_t kThrombusMin = 90;
inline constexpr std::uint8_t kThrombusMax = 140;
inline constexpr std::uint8_t kWallMin = 181;
}  // namespace render

double radius_profile(const PhantomConfig& cfg, double y);

// Radius of one iliac at the centerline point with craniocaudal coordinate y (y <= bifurcation).
double iliac_radius_profile(const PhantomConfig& cfg, Side side, double y);

bool atheromatous_at(const PhantomConfig& cfg, double y);

GroundTruth ground_truth(const PhantomConfig& cfg);

double surface_height(const PhantomConfig& cfg, const Eigen::Vector2d& xy);

// Throws Error(kNoContact) when the probe face is more than 5 mm above the surface.
UsFrame render_frame(const PhantomConfig& cfg, const Pose& p, std::uint32_t frame_id);

// Throws Error(kNotFrozen) for a live frame and Error(kInvalidArgument) for out-of-frame points.
double caliper_measure(const UsFrame& f, Pixel a, Pixel b);

// Automatic caliper placement on the vessel nearest the image center line.
struct VesselReading {
  Pixel anterior;   // first wall pixel above the lumen
  Pixel posterior;  // first wall pixel below the lumen
  double ap_diameter = 0.0;
  bool thrombus_seen = false;
  double wall_ratio = 0.0;  // measured wall thickness over nominal
};

// Throws Error(kNotFrozen) for live frames and Error(kMeasurementFailed) when no closed
// vessel outline is found.
VesselReading read_vessel(const UsFrame& f);

inline constexpr double kThickWallRatio = 1.5;
inline constexpr int kMinGradeFrames = 5;
inline constexpr double kMinGradeCoverage = 0.6;

// Atheromatosis grade from a sweep of frames. `aorta_y_range` is the craniocaudal extent of
// the imaged aorta; frames must cover at least 60% of it.
Grade grade_estimate(std::span<const UsFrame> frames, std::array<double, 2> aorta_y_range);

void write_pgm(const UsFrame& f, const std::filesystem::path& path);

// Flat `key = value` config files, `#` comments.
PhantomConfig parse_phantom_config(std::string_view text);
PhantomConfig load_phantom_config(const std::filesystem::path& path);
std::string format_phantom_config(const PhantomConfig& cfg);

// Named presets: normal_aorta, aaa_54mm, athero_segmentary.
PhantomConfig phantom_preset(std::string_view name);  // throws Error(kInvalidArgument)
std::vector<std::string> phantom_preset_names();

}  // namespace tersim
