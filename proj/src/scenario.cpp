// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#include "tersim/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "tersim/error.hpp"
#include "tersim/util.hpp"

namespace tersim {

namespace {

std::string read_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, std::string("cannot open ") + what + " " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Reader {
 public:
  explicit Reader(std::string_view source) : source_(source) {}

  [[noreturn]] void fail(const YAML::Mark& m, const std::string& msg) const {
    throw Error(ErrorCode::kParse, source_ + ":" + std::to_string(m.line + 1) + ":" +
                                       std::to_string(m.column + 1) + ": " + msg);
  }
  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const { fail(n.Mark(), msg); }

  YAML::Node load(std::string_view text) const {
    try {
      YAML::Node root = YAML::Load(std::string(text));
      if (!root.IsMap()) fail(root.Mark(), "top level must be a mapping");
      return root;
    } catch (const YAML::ParserException& e) {
      fail(e.mark, e.msg);
    }
  }

  void require_keys(const YAML::Node& map, std::initializer_list<std::string_view> allowed) const {
    if (!map.IsMap()) fail(map, "expected a mapping");
    const std::set<std::string_view> ok(allowed);
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (!ok.count(key)) fail(kv.first, "unknown key '" + key + "'");
    }
  }

  YAML::Node need(const YAML::Node& map, const char* key) const {
    const YAML::Node n = map[key];
    if (!n) fail(map, std::string("missing required key '") + key + "'");
    return n;
  }

  std::string str(const YAML::Node& n, const char* what) const {
    if (!n.IsScalar()) fail(n, std::string(what) + " must be a string");
    return n.Scalar();
  }

  double num(const YAML::Node& n, const char* what) const {
    if (!n.IsScalar()) fail(n, std::string(what) + " must be a number");
    const auto v = parse_double(trim(n.Scalar()));
    if (!v || !std::isfinite(*v)) fail(n, std::string(what) + " must be a finite number, got '" + n.Scalar() + "'");
    return *v;
  }

  std::uint64_t uint(const YAML::Node& n, const char* what) const {
    if (!n.IsScalar()) fail(n, std::string(what) + " must be a non-negative integer");
    const auto v = parse_uint(trim(n.Scalar()));
    if (!v) fail(n, std::string(what) + " must be a non-negative integer, got '" + n.Scalar() + "'");
    return *v;
  }

  std::int64_t integer(const YAML::Node& n, const char* what) const {
    if (!n.IsScalar()) fail(n, std::string(what) + " must be an integer");
    const auto v = parse_int(trim(n.Scalar()));
    if (!v) fail(n, std::string(what) + " must be an integer, got '" + n.Scalar() + "'");
    return *v;
  }

  void version(const YAML::Node& root) const {
    const auto v = need(root, "version");
    if (integer(v, "version") != kFileFormatVersion)
      fail(v, "unsupported version " + v.Scalar() + " (expected " + std::to_string(kFileFormatVersion) + ")");
  }

  void opt_num(const YAML::Node& map, const char* key, double& dst) const {
    if (const auto n = map[key]) dst = num(n, key);
  }

  ChannelParams channel(const YAML::Node& n) const {
    if (n.IsScalar()) {
      try {
        return channel_preset(n.Scalar());
      } catch (const Error& e) {
        fail(n, e.what());
      }
    }
    require_keys(n, {"preset", "base_delay", "jitter", "loss_prob", "seed", "outage"});
    ChannelParams p;
    if (const auto pre = n["preset"]) {
      try {
        p = channel_preset(str(pre, "preset"));
      } catch (const Error& e) {
        fail(pre, e.what());
      }
    }
    opt_num(n, "base_delay", p.base_delay);
    opt_num(n, "jitter", p.jitter);
    opt_num(n, "loss_prob", p.loss_prob);
    if (const auto s = n["seed"]) p.seed = uint(s, "seed");
    if (const auto o = n["outage"]) {
      require_keys(o, {"start", "end"});
      p.outage = Outage{from_seconds(num(need(o, "start"), "outage.start")),
                        from_seconds(num(need(o, "end"), "outage.end"))};
    }
    try {
      validate(p);
    } catch (const Error& e) {
      fail(n, e.what());
    }
    return p;
  }

  PhantomConfig phantom(const YAML::Node& n, const std::filesystem::path& base_dir) const {
    if (n.IsScalar()) {
      try {
        return phantom_preset(n.Scalar());
      } catch (const Error& e) {
        fail(n, e.what());
      }
    }
    if (!n.IsMap()) fail(n, "phantom must be a preset name or a mapping");
    if (const auto f = n["file"]) {
      if (n.size() != 1) fail(n, "phantom 'file' cannot be combined with other keys");
      std::filesystem::path p = str(f, "file");
      if (p.is_relative()) p = base_dir / p;
      try {
        return load_phantom_config(p);
      } catch (const Error& e) {
        fail(f, e.what());
      }
    }
    // Inline keys use the phantom config file vocabulary; nested maps join with '.'.
    std::string text;
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      if (kv.second.IsMap()) {
        for (const auto& sub : kv.second) text += key + "." + sub.first.as<std::string>() + " = " + sub.second.Scalar() + "\n";
      } else {
        text += key + " = " + str(kv.second, key.c_str()) + "\n";
      }
    }
    try {
      return parse_phantom_config(text);
    } catch (const Error& e) {
      fail(n, std::string("phantom: ") + e.what());
    }
  }

 private:
  std::string source_;
};

}  // namespace

Scenario parse_scenario(std::string_view yaml, std::string_view source, const std::filesystem::path& base_dir) {
  const Reader rd(source);
  const YAML::Node root = rd.load(yaml);
  rd.require_keys(root, {"version", "name", "seed", "phantom", "channel", "contact_depth", "sweep", "measurements"});
  rd.version(root);

  Scenario sc;
  sc.name = rd.str(rd.need(root, "name"), "name");
  if (const auto s = root["seed"]) sc.seed = rd.uint(s, "seed");
  sc.phantom = rd.phantom(rd.need(root, "phantom"), base_dir);
  sc.channel = root["channel"] ? rd.channel(root["channel"]) : channel_preset("vthd");
  if (const auto d = root["contact_depth"]) {
    sc.contact_depth = rd.num(d, "contact_depth");
    if (sc.contact_depth < 0.0 || sc.contact_depth > Workspace{}.half_extents.z())
      rd.fail(d, "contact_depth must lie in [0, " + format_double(Workspace{}.half_extents.z()) + "] m");
  }

  const SessionConfig cfg;
  const YAML::Node sweep = rd.need(root, "sweep");
  if (!sweep.IsSequence()) rd.fail(sweep, "sweep must be a list of stations");
  for (const auto& st_node : sweep) {
    rd.require_keys(st_node, {"xy", "tilt", "dwell_ticks"});
    Station st;
    const auto xy = rd.need(st_node, "xy");
    if (!xy.IsSequence() || xy.size() != 2) rd.fail(xy, "xy must be a list [x, y] in meters");
    st.xy = {rd.num(xy[0], "x"), rd.num(xy[1], "y")};
    if (const auto t = st_node["tilt"]) st.tilt = rd.num(t, "tilt");
    if (const auto d = st_node["dwell_ticks"]) {
      const auto v = rd.integer(d, "dwell_ticks");
      if (v < 0 || v > 100000) rd.fail(d, "dwell_ticks must lie in [0, 100000]");
      st.dwell_ticks = static_cast<int>(v);
    }
    if (!cfg.workspace.contains({st.xy.x(), st.xy.y(), -sc.contact_depth}))
      rd.fail(xy, "station lies outside the workspace");
    if (std::abs(st.tilt) > cfg.limits.max_tilt) rd.fail(st_node["tilt"], "tilt exceeds the fine-stage limit");
    sc.sweep.push_back(st);
  }

  if (const auto ms = root["measurements"]) {
    if (!ms.IsSequence()) rd.fail(ms, "measurements must be a list");
    for (const auto& m_node : ms) {
      rd.require_keys(m_node, {"station", "measure"});
      MeasurementRequest m;
      const auto st = rd.need(m_node, "station");
      m.station_index = rd.uint(st, "station");
      if (m.station_index >= sc.sweep.size())
        rd.fail(st, "station " + std::to_string(m.station_index) + " does not exist in the sweep");
      const auto kind_node = rd.need(m_node, "measure");
      const auto kind = rd.str(kind_node, "measure");
      if (kind == "ap_aorta") m.measure = MeasureKind::kApAorta;
      else if (kind == "ap_iliac_left") m.measure = MeasureKind::kApIliacLeft;
      else if (kind == "ap_iliac_right") m.measure = MeasureKind::kApIliacRight;
      else rd.fail(kind_node, "unknown measure '" + kind + "' (ap_aorta, ap_iliac_left, ap_iliac_right)");
      sc.measurements.push_back(m);
    }
  }

  try {
    validate(sc, cfg);
  } catch (const Error& e) {
    rd.fail(root, e.what());
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_file(path, "scenario"), path.string(), path.parent_path());
}

void validate(const CohortSpec& c) {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::kScenarioInvalid, "cohort: " + what); };
  if (c.n_patients < 1) bad("n_patients must be >= 1");
  if (c.failed_exams > c.n_patients) bad("failed_exams exceeds n_patients");
  if (!(c.aaa_prevalence >= 0.0 && c.aaa_prevalence <= 1.0)) bad("aaa_prevalence must lie in [0, 1]");
  if (!(c.thrombus_probability >= 0.0 && c.thrombus_probability <= 1.0))
    bad("thrombus_probability must lie in [0, 1]");
  if (!(c.aaa_diameter_median > 0.0) || !(c.aaa_diameter_sigma_log >= 0.0)) bad("invalid AAA diameter distribution");
  if (!(c.aaa_diameter_range[0] >= kAaaThreshold && c.aaa_diameter_range[0] <= c.aaa_diameter_range[1]))
    bad("aaa diameter range must start at or above the 30 mm AAA threshold");
  if (c.aaa_diameter_range[1] > 0.1) bad("aaa diameter range must stay below 100 mm");
  if (!(c.aorta_radius_mean > 0.0) || !(c.aorta_radius_sd >= 0.0)) bad("invalid aorta radius distribution");
  if (!(c.aorta_radius_range[0] > 0.0 && c.aorta_radius_range[0] <= c.aorta_radius_range[1] &&
        2 * c.aorta_radius_range[1] < kAaaThreshold))
    bad("aorta radius range must be positive and stay below the AAA threshold");
  double total = 0.0;
  for (double w : c.grade_mix) {
    if (!(w >= 0.0) || !std::isfinite(w)) bad("grade_mix weights must be non-negative");
    total += w;
  }
  if (!(total > 0.0)) bad("grade_mix weights must not all be zero");
  validate(c.channel);
}

CohortSpec parse_cohort(std::string_view yaml, std::string_view source) {
  const Reader rd(source);
  const YAML::Node root = rd.load(yaml);
  rd.require_keys(root, {"version", "seed", "n_patients", "aaa_prevalence", "failed_exams", "aaa_diameter",
                         "aorta_radius", "thrombus_probability", "grade_mix", "channel", "site_id"});
  rd.version(root);

  CohortSpec c;
  if (const auto n = root["seed"]) c.seed = rd.uint(n, "seed");
  if (const auto n = root["n_patients"]) {
    c.n_patients = rd.uint(n, "n_patients");
    if (c.n_patients < 1) rd.fail(n, "n_patients must be >= 1");
  }
  if (const auto n = root["aaa_prevalence"]) {
    c.aaa_prevalence = rd.num(n, "aaa_prevalence");
    if (c.aaa_prevalence < 0.0 || c.aaa_prevalence > 1.0) rd.fail(n, "aaa_prevalence must lie in [0, 1]");
  }
  if (const auto n = root["failed_exams"]) {
    c.failed_exams = rd.uint(n, "failed_exams");
    if (c.failed_exams > c.n_patients) rd.fail(n, "failed_exams exceeds n_patients");
  }
  if (const auto n = root["aaa_diameter"]) {
    rd.require_keys(n, {"median", "sigma_log", "min", "max"});
    rd.opt_num(n, "median", c.aaa_diameter_median);
    rd.opt_num(n, "sigma_log", c.aaa_diameter_sigma_log);
    rd.opt_num(n, "min", c.aaa_diameter_range[0]);
    rd.opt_num(n, "max", c.aaa_diameter_range[1]);
  }
  if (const auto n = root["aorta_radius"]) {
    rd.require_keys(n, {"mean", "sd", "min", "max"});
    rd.opt_num(n, "mean", c.aorta_radius_mean);
    rd.opt_num(n, "sd", c.aorta_radius_sd);
    rd.opt_num(n, "min", c.aorta_radius_range[0]);
    rd.opt_num(n, "max", c.aorta_radius_range[1]);
  }
  if (const auto n = root["thrombus_probability"]) {
    c.thrombus_probability = rd.num(n, "thrombus_probability");
    if (c.thrombus_probability < 0.0 || c.thrombus_probability > 1.0)
      rd.fail(n, "thrombus_probability must lie in [0, 1]");
  }
  if (const auto n = root["grade_mix"]) {
    rd.require_keys(n, {"none", "segmentary", "diffuse"});
    rd.opt_num(n, "none", c.grade_mix[0]);
    rd.opt_num(n, "segmentary", c.grade_mix[1]);
    rd.opt_num(n, "diffuse", c.grade_mix[2]);
  }
  if (const auto n = root["channel"]) {
    c.channel = rd.channel(n);
    c.channel_name = n.IsScalar() ? n.Scalar() : "custom";
  }
  if (const auto n = root["site_id"]) c.site_id = rd.str(n, "site_id");

  try {
    validate(c);
  } catch (const Error& e) {
    rd.fail(root, e.what());
  }
  return c;
}

CohortSpec load_cohort(const std::filesystem::path& path) {
  return parse_cohort(read_file(path, "cohort"), path.string());
}

}  // namespace tersim
