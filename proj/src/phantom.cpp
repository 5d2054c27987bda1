// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#include "tersim/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "tersim/error.hpp"
#include "tersim/util.hpp"

namespace tersim {

namespace {

using render::kFrameSize;
using render::kPixelSpacing;
using render::kWallThickness;

constexpr double kIliacLength = 0.12;

enum Tissue : int { kBackground = 0, kWall = 1, kClot = 2, kLumen = 3 };

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, "phantom: " + what);
}

double gauss(const Aneurysm& a, double y) {
  const double d = y - a.center_y;
  return std::exp(-(d * d) / (2.0 * a.sigma * a.sigma));
}

double excess(const PhantomConfig& cfg) {
  return cfg.aneurysm ? cfg.aneurysm->peak_radius - cfg.aorta_base_radius : 0.0;
}

Eigen::Vector3d iliac_direction(const PhantomConfig& cfg, Side side) {
  const double sx = side == Side::kLeft ? 1.0 : -1.0;
  return {sx * std::sin(cfg.iliac_angle), -std::cos(cfg.iliac_angle), 0.0};
}

// Speckle quantiles of a Rayleigh distribution (scale 16) clipped into 40..85.
const std::array<std::uint8_t, 256>& background_table() {
  static const std::array<std::uint8_t, 256> table = [] {
    std::array<std::uint8_t, 256> t{};
    for (int i = 0; i < 256; ++i) {
      const double u = (i + 0.5) / 256.0;
      const double a = 16.0 * std::sqrt(-2.0 * std::log(1.0 - u));
      t[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(40.0 + std::min(a, 45.0));
    }
    return t;
  }();
  return table;
}

std::uint8_t shade(int tissue, std::uint64_t h) {
  switch (tissue) {
    case kLumen: return static_cast<std::uint8_t>(h % 18);
    case kClot: return static_cast<std::uint8_t>(95 + h % 41);
    case kWall: return static_cast<std::uint8_t>(190 + h % 61);
    default: return background_table()[h & 0xff];
  }
}

// Classifies a point against one tube: lumen / clot / wall / outside.
int classify_tube(double rho, double radius, double wall, double clot_fraction) {
  if (rho < radius) return rho >= radius * (1.0 - clot_fraction) ? kClot : kLumen;
  if (rho < radius + wall) return kWall;
  return kBackground;
}

class TissueModel {
 public:
  explicit TissueModel(const PhantomConfig& cfg) : cfg_(cfg) {
    const double bulge = excess(cfg);
    aorta_reach_ = cfg.aorta_base_radius + bulge + 2.0 * kWallThickness;
    bif_ = {0.0, cfg.bifurcation_y, -cfg.aorta_depth};
    for (int s = 0; s < 2; ++s) {
      dir_[s] = iliac_direction(cfg, static_cast<Side>(s));
      iliac_reach_[s] = cfg.iliac_radius[static_cast<std::size_t>(s)] + bulge + 2.0 * kWallThickness;
    }
  }

  int classify(const Eigen::Vector3d& w) const {
    int best = kBackground;

    const double dx = w.x();
    const double dz = w.z() + cfg_.aorta_depth;
    const double dy = w.y() < cfg_.bifurcation_y ? w.y() - cfg_.bifurcation_y : 0.0;
    const double rho2 = dx * dx + dz * dz + dy * dy;
    if (rho2 < aorta_reach_ * aorta_reach_) {
      const double y = std::max(w.y(), cfg_.bifurcation_y);
      const double r = radius_profile(cfg_, y);
      double clot = 0.0;
      if (cfg_.thrombus && y >= cfg_.thrombus->y_min && y <= cfg_.thrombus->y_max)
        clot = cfg_.thrombus->fraction;
      best = std::max(best, classify_tube(std::sqrt(rho2), r, wall_at(y), clot));
    }
    if (best == kLumen) return best;

    const Eigen::Vector3d v = w - bif_;
    for (int s = 0; s < 2; ++s) {
      const double t = std::clamp(v.dot(dir_[s]), 0.0, kIliacLength);
      const Eigen::Vector3d q = v - t * dir_[s];
      const double rho2i = q.squaredNorm();
      if (rho2i >= iliac_reach_[s] * iliac_reach_[s]) continue;
      const double y = cfg_.bifurcation_y + t * dir_[s].y();
      const double r = iliac_radius_profile(cfg_, static_cast<Side>(s), y);
      best = std::max(best, classify_tube(std::sqrt(rho2i), r, wall_at(y), 0.0));
    }
    return best;
  }

 private:
  double wall_at(double y) const {
    return atheromatous_at(cfg_, y) ? 2.0 * kWallThickness : kWallThickness;
  }

  const PhantomConfig& cfg_;
  double aorta_reach_;
  Eigen::Vector3d bif_;
  std::array<Eigen::Vector3d, 2> dir_;
  std::array<double, 2> iliac_reach_{};
};

struct Outline {
  int col = 0;
  int top = 0;     // first interior row
  int bottom = 0;  // last interior row
  bool clot = false;
};

bool is_interior(std::uint8_t v) {
  return v <= render::kLumenMax || (v >= render::kThrombusMin && v <= render::kThrombusMax);
}

bool is_wall(std::uint8_t v) { return v >= render::kWallMin; }

// Finds the vessel cross-section nearest the center column and the column with the
// largest closed vertical extent.
Outline trace_vessel(const UsFrame& f) {
  const int w = f.width;
  const int h = f.height;
  const int center = w / 2;

  int seed_col = -1;
  int seed_row = -1;
  for (int off = 0; off <= w / 2 && seed_col < 0; ++off) {
    for (int sign : {1, -1}) {
      const int c = center + sign * off;
      if (c < 0 || c >= w || (off == 0 && sign < 0)) continue;
      for (int r = 1; r < h; ++r) {
        if (f.at(c, r) <= render::kLumenMax) {
          seed_col = c;
          seed_row = r;
          break;
        }
      }
      if (seed_col >= 0) break;
    }
  }
  if (seed_col < 0) throw Error(ErrorCode::kMeasurementFailed, "no anechoic lumen in frame");

  std::vector<int> top(static_cast<std::size_t>(w), h);
  std::vector<int> bottom(static_cast<std::size_t>(w), -1);
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(w * h), 0);
  std::vector<std::pair<int, int>> stack{{seed_col, seed_row}};
  seen[static_cast<std::size_t>(seed_row * w + seed_col)] = 1;
  bool clot = false;
  while (!stack.empty()) {
    const auto [c, r] = stack.back();
    stack.pop_back();
    const std::uint8_t v = f.at(c, r);
    if (v >= render::kThrombusMin) clot = true;
    top[static_cast<std::size_t>(c)] = std::min(top[static_cast<std::size_t>(c)], r);
    bottom[static_cast<std::size_t>(c)] = std::max(bottom[static_cast<std::size_t>(c)], r);
    const int nbr[4][2] = {{c + 1, r}, {c - 1, r}, {c, r + 1}, {c, r - 1}};
    for (const auto& n : nbr) {
      if (n[0] < 0 || n[0] >= w || n[1] < 0 || n[1] >= h) continue;
      const auto idx = static_cast<std::size_t>(n[1] * w + n[0]);
      if (seen[idx] || !is_interior(f.at(n[0], n[1]))) continue;
      seen[idx] = 1;
      stack.emplace_back(n[0], n[1]);
    }
  }

  Outline best;
  int best_extent = -1;
  for (int c = 0; c < w; ++c) {
    const int t = top[static_cast<std::size_t>(c)];
    const int b = bottom[static_cast<std::size_t>(c)];
    if (b < 0 || t < 1 || b >= h - 1) continue;
    if (!is_wall(f.at(c, t - 1)) || !is_wall(f.at(c, b + 1))) continue;
    const int extent = b - t;
    const bool closer = std::abs(c - center) < std::abs(best.col - center);
    if (extent > best_extent || (extent == best_extent && closer)) {
      best_extent = extent;
      best = {c, t, b, clot};
    }
  }
  if (best_extent < 0)
    throw Error(ErrorCode::kMeasurementFailed, "vessel outline is not closed within the frame");
  return best;
}

double wall_ratio(const UsFrame& f, const Outline& o) {
  int above = 0;
  for (int r = o.top - 1; r >= 0 && is_wall(f.at(o.col, r)); --r) ++above;
  int below = 0;
  for (int r = o.bottom + 1; r < f.height && is_wall(f.at(o.col, r)); ++r) ++below;
  const double nominal = kWallThickness / f.pixel_spacing;
  return 0.5 * (above + below) / nominal;
}

}  // namespace

const char* grade_name(Grade g) noexcept {
  switch (g) {
    case Grade::kNone: return "none";
    case Grade::kSegmentary: return "segmentary";
    case Grade::kDiffuse: return "diffuse";
  }
  return "none";
}

Grade parse_grade(std::string_view s) {
  s = trim(s);
  if (s == "none") return Grade::kNone;
  if (s == "segmentary") return Grade::kSegmentary;
  if (s == "diffuse") return Grade::kDiffuse;
  throw Error(ErrorCode::kParse, "unknown atheromatosis grade '" + std::string(s) + "'");
}

void validate(const PhantomConfig& cfg) {
  require(cfg.aorta_depth > 0.0 && std::isfinite(cfg.aorta_depth), "aorta_depth must be positive");
  require(cfg.aorta_base_radius > 0.0 && std::isfinite(cfg.aorta_base_radius),
          "aorta_base_radius must be positive");
  require(std::isfinite(cfg.bifurcation_y), "bifurcation_y must be finite");
  for (double r : cfg.iliac_radius) require(r > 0.0 && std::isfinite(r), "iliac radius must be positive");
  require(cfg.iliac_angle > 0.0 && cfg.iliac_angle < 1.5, "iliac_angle must lie in (0, 1.5) rad");
  require(cfg.stiffness > 0.0 && std::isfinite(cfg.stiffness), "stiffness must be positive");
  if (cfg.aneurysm) {
    require(std::isfinite(cfg.aneurysm->center_y), "aneurysm center_y must be finite");
    require(cfg.aneurysm->peak_radius >= cfg.aorta_base_radius,
            "aneurysm peak_radius must be >= aorta_base_radius");
    require(cfg.aneurysm->sigma > 0.0, "aneurysm sigma must be positive");
  }
  if (cfg.thrombus) {
    require(cfg.thrombus->fraction >= 0.0 && cfg.thrombus->fraction < 1.0,
            "thrombus fraction must lie in [0, 1)");
    require(cfg.thrombus->y_min <= cfg.thrombus->y_max, "thrombus extent is reversed");
  }
  require(cfg.segmentary_extent_y[0] <= cfg.segmentary_extent_y[1], "segmentary extent is reversed");
}

double radius_profile(const PhantomConfig& cfg, double y) {
  if (!cfg.aneurysm) return cfg.aorta_base_radius;
  return cfg.aorta_base_radius + excess(cfg) * gauss(*cfg.aneurysm, y);
}

double iliac_radius_profile(const PhantomConfig& cfg, Side side, double y) {
  const double base = cfg.iliac_radius[static_cast<std::size_t>(side)];
  if (!cfg.aneurysm) return base;
  return base + excess(cfg) * gauss(*cfg.aneurysm, std::min(y, cfg.bifurcation_y));
}

bool atheromatous_at(const PhantomConfig& cfg, double y) {
  switch (cfg.atheromatosis_grade) {
    case Grade::kNone: return false;
    case Grade::kDiffuse: return true;
    case Grade::kSegmentary:
      return y >= cfg.segmentary_extent_y[0] && y <= cfg.segmentary_extent_y[1];
  }
  return false;
}

GroundTruth ground_truth(const PhantomConfig& cfg) {
  GroundTruth gt;
  gt.grade = cfg.atheromatosis_grade;
  double peak_y = cfg.bifurcation_y;
  if (cfg.aneurysm) peak_y = std::max(cfg.aneurysm->center_y, cfg.bifurcation_y);
  gt.max_ap_y = peak_y;
  gt.max_ap_diameter = 2.0 * radius_profile(cfg, peak_y);
  gt.has_aaa = gt.max_ap_diameter >= kAaaThreshold;
  gt.has_thrombus = cfg.thrombus.has_value() && cfg.thrombus->fraction > 0.0;
  gt.iliac_extension = cfg.aneurysm.has_value() &&
                       radius_profile(cfg, cfg.bifurcation_y) > 1.1 * cfg.aorta_base_radius;
  const double iliac_peak_y =
      cfg.aneurysm ? std::min(cfg.aneurysm->center_y, cfg.bifurcation_y) : cfg.bifurcation_y;
  for (int s = 0; s < 2; ++s)
    gt.iliac_ap_diameters[static_cast<std::size_t>(s)] =
        2.0 * iliac_radius_profile(cfg, static_cast<Side>(s), iliac_peak_y);
  return gt;
}

double surface_height(const PhantomConfig&, const Eigen::Vector2d&) { return 0.0; }

UsFrame render_frame(const PhantomConfig& cfg, const Pose& p, std::uint32_t frame_id) {
  if (!p.is_finite()) throw Error(ErrorCode::kInvalidPose, "pose has non-finite components");
  const Eigen::Vector2d xy = p.position.head<2>();
  if (p.position.z() - surface_height(cfg, xy) > render::kMaxContactGap)
    throw Error(ErrorCode::kNoContact, "probe is not in contact with the phantom surface");

  UsFrame f;
  f.width = kFrameSize;
  f.height = kFrameSize;
  f.pixel_spacing = kPixelSpacing;
  f.pose = p;
  f.frame_id = frame_id;
  f.intensities.resize(static_cast<std::size_t>(kFrameSize) * kFrameSize);

  const Eigen::Matrix3d R = p.orientation.normalized().toRotationMatrix();
  const Eigen::Vector3d lateral = R.col(0) * kPixelSpacing;
  const Eigen::Vector3d down = -R.col(2) * kPixelSpacing;
  const TissueModel model(cfg);
  const std::uint64_t key = splitmix64(cfg.rng_seed ^ static_cast<std::uint64_t>(frame_id));

  std::size_t idx = 0;
  for (int row = 0; row < kFrameSize; ++row) {
    const Eigen::Vector3d row_origin = p.position + row * down - (kFrameSize / 2) * lateral;
    for (int col = 0; col < kFrameSize; ++col, ++idx) {
      const Eigen::Vector3d w = row_origin + col * lateral;
      f.intensities[idx] = shade(model.classify(w), splitmix64(key + idx));
    }
  }
  return f;
}

double caliper_measure(const UsFrame& f, Pixel a, Pixel b) {
  if (!f.frozen) throw Error(ErrorCode::kNotFrozen, "caliper needs a frozen frame");
  auto inside = [&](Pixel q) { return q.col >= 0 && q.col < f.width && q.row >= 0 && q.row < f.height; };
  if (!inside(a) || !inside(b))
    throw Error(ErrorCode::kInvalidArgument, "caliper endpoint outside the frame");
  return std::hypot(static_cast<double>(a.col - b.col), static_cast<double>(a.row - b.row)) *
         f.pixel_spacing;
}

VesselReading read_vessel(const UsFrame& f) {
  if (!f.frozen) throw Error(ErrorCode::kNotFrozen, "vessel reading needs a frozen frame");
  const Outline o = trace_vessel(f);
  VesselReading r;
  r.anterior = {o.col, o.top - 1};
  r.posterior = {o.col, o.bottom + 1};
  r.ap_diameter = caliper_measure(f, r.anterior, r.posterior);
  r.thrombus_seen = o.clot;
  r.wall_ratio = wall_ratio(f, o);
  return r;
}

Grade grade_estimate(std::span<const UsFrame> frames, std::array<double, 2> aorta_y_range) {
  if (frames.size() < static_cast<std::size_t>(kMinGradeFrames))
    throw Error(ErrorCode::kInsufficientSweep, "grading needs at least 5 frames");
  double lo = frames.front().pose.position.y();
  double hi = lo;
  for (const auto& f : frames) {
    lo = std::min(lo, f.pose.position.y());
    hi = std::max(hi, f.pose.position.y());
  }
  const double extent = aorta_y_range[1] - aorta_y_range[0];
  if (!(extent > 0.0) || hi - lo < kMinGradeCoverage * extent)
    throw Error(ErrorCode::kInsufficientSweep, "sweep covers less than 60% of the aorta");

  std::size_t thick = 0;
  for (const auto& f : frames)
    if (wall_ratio(f, trace_vessel(f)) >= kThickWallRatio) ++thick;
  const double q = static_cast<double>(thick) / static_cast<double>(frames.size());
  if (q == 0.0) return Grade::kNone;
  return q <= 0.5 ? Grade::kSegmentary : Grade::kDiffuse;
}

void write_pgm(const UsFrame& f, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "P5\n" << f.width << ' ' << f.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(f.intensities.data()),
            static_cast<std::streamsize>(f.intensities.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

PhantomConfig parse_phantom_config(std::string_view text) {
  std::map<std::string, std::pair<std::string, int>> kv;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    std::string_view l = line;
    if (auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    l = trim(l);
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": expected key = value");
    std::string key(trim(l.substr(0, eq)));
    if (kv.count(key))
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": duplicate key " + key);
    kv[key] = {std::string(trim(l.substr(eq + 1))), line_no};
  }

  PhantomConfig cfg;
  auto take = [&](const std::string& key) -> std::optional<std::pair<std::string, int>> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    auto v = it->second;
    kv.erase(it);
    return v;
  };
  auto num = [&](const std::string& key, double& dst) {
    if (auto v = take(key)) {
      auto d = parse_double(v->first);
      if (!d)
        throw Error(ErrorCode::kParse,
                    "line " + std::to_string(v->second) + ": " + key + " is not a number");
      dst = *d;
      return true;
    }
    return false;
  };

  num("aorta_depth", cfg.aorta_depth);
  num("aorta_base_radius", cfg.aorta_base_radius);
  num("bifurcation_y", cfg.bifurcation_y);
  num("iliac_radius_left", cfg.iliac_radius[0]);
  num("iliac_radius_right", cfg.iliac_radius[1]);
  num("iliac_angle", cfg.iliac_angle);
  num("segmentary_y_min", cfg.segmentary_extent_y[0]);
  num("segmentary_y_max", cfg.segmentary_extent_y[1]);
  num("stiffness", cfg.stiffness);

  Aneurysm an;
  const int an_keys = num("aneurysm.center_y", an.center_y) + num("aneurysm.peak_radius", an.peak_radius) +
                      num("aneurysm.sigma", an.sigma);
  if (an_keys == 3)
    cfg.aneurysm = an;
  else if (an_keys != 0)
    throw Error(ErrorCode::kParse, "aneurysm needs center_y, peak_radius and sigma together");

  Thrombus th;
  const int th_keys = num("thrombus.fraction", th.fraction) + num("thrombus.y_min", th.y_min) +
                      num("thrombus.y_max", th.y_max);
  if (th_keys == 3)
    cfg.thrombus = th;
  else if (th_keys != 0)
    throw Error(ErrorCode::kParse, "thrombus needs fraction, y_min and y_max together");

  if (auto v = take("atheromatosis_grade")) cfg.atheromatosis_grade = parse_grade(v->first);
  if (auto v = take("rng_seed")) {
    auto s = parse_uint(v->first);
    if (!s)
      throw Error(ErrorCode::kParse, "line " + std::to_string(v->second) + ": rng_seed is not an integer");
    cfg.rng_seed = *s;
  }
  if (!kv.empty()) {
    const auto& [key, v] = *kv.begin();
    throw Error(ErrorCode::kParse, "line " + std::to_string(v.second) + ": unknown key " + key);
  }
  try {
    validate(cfg);
  } catch (const Error& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
  return cfg;
}

PhantomConfig load_phantom_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open phantom config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_phantom_config(ss.str());
}

std::string format_phantom_config(const PhantomConfig& cfg) {
  std::ostringstream out;
  auto put = [&](const char* key, double v) { out << key << " = " << format_double(v) << '\n'; };
  put("aorta_depth", cfg.aorta_depth);
  put("aorta_base_radius", cfg.aorta_base_radius);
  if (cfg.aneurysm) {
    put("aneurysm.center_y", cfg.aneurysm->center_y);
    put("aneurysm.peak_radius", cfg.aneurysm->peak_radius);
    put("aneurysm.sigma", cfg.aneurysm->sigma);
  }
  if (cfg.thrombus) {
    put("thrombus.fraction", cfg.thrombus->fraction);
    put("thrombus.y_min", cfg.thrombus->y_min);
    put("thrombus.y_max", cfg.thrombus->y_max);
  }
  put("bifurcation_y", cfg.bifurcation_y);
  put("iliac_radius_left", cfg.iliac_radius[0]);
  put("iliac_radius_right", cfg.iliac_radius[1]);
  put("iliac_angle", cfg.iliac_angle);
  out << "atheromatosis_grade = " << grade_name(cfg.atheromatosis_grade) << '\n';
  put("segmentary_y_min", cfg.segmentary_extent_y[0]);
  put("segmentary_y_max", cfg.segmentary_extent_y[1]);
  put("stiffness", cfg.stiffness);
  out << "rng_seed = " << cfg.rng_seed << '\n';
  return out.str();
}

PhantomConfig phantom_preset(std::string_view name) {
  PhantomConfig cfg;
  if (name == "normal_aorta") return cfg;
  if (name == "aaa_54mm") {
    cfg.aneurysm = Aneurysm{0.020, 0.027, 0.015};
    cfg.thrombus = Thrombus{0.35, 0.0, 0.04};
    cfg.atheromatosis_grade = Grade::kDiffuse;
    return cfg;
  }
  if (name == "athero_segmentary") {
    cfg.atheromatosis_grade = Grade::kSegmentary;
    cfg.segmentary_extent_y = {0.01, 0.03};
    return cfg;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown phantom preset '" + std::string(name) + "'");
}

std::vector<std::string> phantom_preset_names() {
  return {"normal_aorta", "aaa_54mm", "athero_segmentary"};
}

}  // namespace tersim
