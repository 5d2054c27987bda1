// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#include "tersim/tersim.h"

#include <cstdlib>
#include <cstring>
#include <deque>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tersim/error.hpp"
#include "tersim/exam.hpp"
#include "tersim/kinematics.hpp"
#include "tersim/netchannel.hpp"
#include "tersim/phantom.hpp"
#include "tersim/protocol.hpp"
#include "tersim/scenario.hpp"
#include "tersim/server.hpp"
#include "tersim/stats.hpp"

struct tersim_phantom {
  tersim::PhantomConfig cfg;
};

struct tersim_frame {
  tersim::UsFrame frame;
};

struct tersim_message {
  tersim::Envelope env;
};

struct tersim_channel {
  explicit tersim_channel(const tersim::ChannelParams& p) : ch(p) {}
  tersim::Channel ch;
  std::deque<std::vector<std::uint8_t>> ready;
};

struct tersim_server {
  std::unique_ptr<tersim::Server> server;
};

namespace {

using tersim::Error;
using tersim::ErrorCode;

thread_local std::string g_last_error;

static_assert(TERSIM_OP_STOP == static_cast<int>(tersim::SessionOp::kStop));
static_assert(TERSIM_OP_FREEZE == static_cast<int>(tersim::SessionOp::kFreeze));
static_assert(TERSIM_OP_UNFREEZE == static_cast<int>(tersim::SessionOp::kUnfreeze));
static_assert(TERSIM_OP_BYE == static_cast<int>(tersim::SessionOp::kBye));
static_assert(TERSIM_MSG_STATUS_REPORT == static_cast<int>(tersim::MessageType::kStatusReport));
static_assert(TERSIM_ERR_INTERNAL == static_cast<int>(ErrorCode::kInternal));
static_assert(TERSIM_ERR_PORT_BUSY == static_cast<int>(ErrorCode::kPortBusy));

template <typename F>
tersim_status guard(F&& f) noexcept {
  try {
    f();
    return TERSIM_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<tersim_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return TERSIM_ERR_INTERNAL;
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
}

tersim::Pose to_pose(const tersim_pose& p) {
  tersim::Pose out;
  out.position = {p.position[0], p.position[1], p.position[2]};
  out.orientation = Eigen::Quaterniond(p.orientation[0], p.orientation[1], p.orientation[2], p.orientation[3]);
  return out;
}

tersim_pose from_pose(const tersim::Pose& p) {
  tersim_pose out{};
  for (int i = 0; i < 3; ++i) out.position[i] = p.position[i];
  out.orientation[0] = p.orientation.w();
  out.orientation[1] = p.orientation.x();
  out.orientation[2] = p.orientation.y();
  out.orientation[3] = p.orientation.z();
  return out;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit_bytes(const std::vector<std::uint8_t>& bytes, std::uint8_t** out, std::size_t* out_size) {
  require(out && out_size, "null output pointer");
  auto* buf = static_cast<std::uint8_t*>(std::malloc(bytes.empty() ? 1 : bytes.size()));
  if (!buf) throw std::bad_alloc();
  if (!bytes.empty()) std::memcpy(buf, bytes.data(), bytes.size());
  *out = buf;
  *out_size = bytes.size();
}

tersim_status encode_to(const tersim::Message& m, std::uint32_t seq, std::uint64_t ts, std::uint8_t** out,
                        std::size_t* out_size) {
  return guard([&] { emit_bytes(tersim::encode(m, seq, ts), out, out_size); });
}

std::vector<tersim::MeasurementPair> pairs_of(const double* b, const double* r, std::size_t n) {
  require(n == 0 || (b && r), "null sample array");
  std::vector<tersim::MeasurementPair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({b[i], r[i], {}, {}});
  return out;
}

tersim::ContingencyTable table_of(const double* t, std::size_t k) {
  require(t != nullptr && k > 0, "null table");
  tersim::ContingencyTable out(k, std::vector<double>(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i][j] = t[i * k + j];
  return out;
}

void fill_kappa(const tersim::KappaResult& k, tersim_kappa* out) {
  require(out != nullptr, "null output pointer");
  *out = {k.kappa, k.se, k.ci95_lo, k.ci95_hi, k.p_observed, k.p_expected};
}

// Missing or unreadable input files are input errors, not environment errors.
template <typename F>
auto load_input(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw Error(ErrorCode::kParse, e.what());
    throw;
  }
}

std::string opt_mm(const std::optional<double>& v) { return v ? fmt::format("{:.1f}", *v * 1000.0) : "-"; }

std::string exam_table(const tersim::ExamResult& r) {
  std::string out = fmt::format("scenario {}  remote session: {}\n", r.scenario.name,
                                r.remote.completed ? "completed" : "FAILED (" + r.remote.failure + ")");
  out += fmt::format("{:<8} {:>4} {:>8} {:>8} {:>9} {:>9} {:>11} {:>10}\n", "arm", "aaa", "ap_mm", "thrombus",
                     "iliac_l", "iliac_r", "grade", "duration_s");
  auto row = [&](const tersim::ExamRecord& rec) {
    out += fmt::format("{:<8} {:>4} {:>8} {:>8} {:>9} {:>9} {:>11} {:>10.2f}\n", tersim::arm_name(rec.arm),
                       rec.aaa_detected ? "yes" : "no", opt_mm(rec.ap_diameter),
                       rec.thrombus ? (*rec.thrombus ? "yes" : "no") : "-", opt_mm(rec.iliac_left),
                       opt_mm(rec.iliac_right), rec.grade ? tersim::grade_name(*rec.grade) : "-", rec.duration);
  };
  row(r.bedside_record);
  if (r.remote_record) row(*r.remote_record);
  out += fmt::format("ground truth: max AP {:.1f} mm{}\n", r.truth.max_ap_diameter * 1000.0,
                     r.truth.has_aaa ? " (AAA)" : "");
  return out;
}

template <typename T>
const T& body_as(const tersim_message* m) {
  require(m != nullptr, "null message");
  const T* b = std::get_if<T>(&m->env.body);
  require(b != nullptr, "message has a different type");
  return *b;
}

}  // namespace

extern "C" {

const char* tersim_version(void) { return "0.1.0"; }

const char* tersim_status_name(tersim_status s) {
  if (s == TERSIM_OK) return "ok";
  if (s < TERSIM_ERR_INVALID_ARGUMENT || s > TERSIM_ERR_INTERNAL) return "unknown";
  return tersim::error_code_name(static_cast<ErrorCode>(s));
}

const char* tersim_last_error_message(void) { return g_last_error.c_str(); }

tersim_status tersim_set_log_level(const char* level) {
  return guard([&] {
    require(level != nullptr, "null log level");
    const auto lvl = spdlog::level::from_str(level);
    if (lvl == spdlog::level::off && std::strcmp(level, "off") != 0)
      throw Error(ErrorCode::kInvalidArgument, std::string("unknown log level '") + level + "'");
    spdlog::set_level(lvl);
  });
}

void tersim_bytes_free(uint8_t* bytes) { std::free(bytes); }
void tersim_string_free(char* s) { std::free(s); }

// ---- kinematics ---------------------------------------------------------------------------

tersim_status tersim_make_station_pose(double x, double y, double z, double tilt, tersim_pose* out) {
  return guard([&] {
    require(out != nullptr, "null output pointer");
    *out = from_pose(tersim::make_station_pose(x, y, z, tilt));
  });
}

tersim_status tersim_clamp_to_workspace(const tersim_pose* in, tersim_pose* out) {
  return guard([&] {
    require(in && out, "null pose pointer");
    *out = from_pose(tersim::clamp_to_workspace(to_pose(*in)));
  });
}

tersim_status tersim_inverse_kinematics(double x, double y, double cables_out[4]) {
  return guard([&] {
    require(cables_out != nullptr, "null output pointer");
    const auto l = tersim::inverse_kinematics({x, y});
    std::copy(l.begin(), l.end(), cables_out);
  });
}

tersim_status tersim_forward_kinematics(const double cables[4], double xy_out[2], double* residual_out) {
  return guard([&] {
    require(cables && xy_out, "null pointer");
    const auto sol = tersim::forward_kinematics({cables[0], cables[1], cables[2], cables[3]});
    xy_out[0] = sol.xy.x();
    xy_out[1] = sol.xy.y();
    if (residual_out) *residual_out = sol.residual;
  });
}

tersim_status tersim_step_toward(const tersim_pose* current, const tersim_pose* target, double dt, double v_max,
                                 double w_max, tersim_pose* out) {
  return guard([&] {
    require(current && target && out, "null pose pointer");
    *out = from_pose(tersim::step_toward(to_pose(*current), to_pose(*target), dt, v_max, w_max));
  });
}

// ---- phantom ------------------------------------------------------------------------------

tersim_status tersim_phantom_preset(const char* name, tersim_phantom** out) {
  return guard([&] {
    require(name && out, "null pointer");
    *out = new tersim_phantom{tersim::phantom_preset(name)};
  });
}

tersim_status tersim_phantom_load(const char* path, tersim_phantom** out) {
  return guard([&] {
    require(path && out, "null pointer");
    *out = new tersim_phantom{load_input([&] { return tersim::load_phantom_config(path); })};
  });
}

tersim_status tersim_phantom_parse(const char* text, tersim_phantom** out) {
  return guard([&] {
    require(text && out, "null pointer");
    *out = new tersim_phantom{tersim::parse_phantom_config(text)};
  });
}

void tersim_phantom_free(tersim_phantom* p) { delete p; }

tersim_status tersim_phantom_ground_truth(const tersim_phantom* p, tersim_ground_truth* out) {
  return guard([&] {
    require(p && out, "null pointer");
    const auto t = tersim::ground_truth(p->cfg);
    *out = {t.has_aaa,         t.max_ap_diameter,
            t.max_ap_y,        t.has_thrombus,
            t.iliac_extension, {t.iliac_ap_diameters[0], t.iliac_ap_diameters[1]},
            static_cast<int>(t.grade)};
  });
}

tersim_status tersim_render_frame(const tersim_phantom* p, const tersim_pose* pose, uint32_t frame_id,
                                  tersim_frame** out) {
  return guard([&] {
    require(p && pose && out, "null pointer");
    *out = new tersim_frame{tersim::render_frame(p->cfg, to_pose(*pose), frame_id)};
  });
}

void tersim_frame_free(tersim_frame* f) { delete f; }
uint32_t tersim_frame_width(const tersim_frame* f) { return f ? static_cast<uint32_t>(f->frame.width) : 0; }
uint32_t tersim_frame_height(const tersim_frame* f) { return f ? static_cast<uint32_t>(f->frame.height) : 0; }
double tersim_frame_pixel_spacing(const tersim_frame* f) { return f ? f->frame.pixel_spacing : 0.0; }
uint32_t tersim_frame_id(const tersim_frame* f) { return f ? f->frame.frame_id : 0; }
int tersim_frame_frozen(const tersim_frame* f) { return f && f->frame.frozen ? 1 : 0; }
const uint8_t* tersim_frame_pixels(const tersim_frame* f) { return f ? f->frame.intensities.data() : nullptr; }

tersim_status tersim_frame_set_frozen(tersim_frame* f, int frozen) {
  return guard([&] {
    require(f != nullptr, "null frame");
    f->frame.frozen = frozen != 0;
  });
}

tersim_status tersim_frame_write_pgm(const tersim_frame* f, const char* path) {
  return guard([&] {
    require(f && path, "null pointer");
    tersim::write_pgm(f->frame, path);
  });
}

tersim_status tersim_caliper_measure(const tersim_frame* f, int32_t col0, int32_t row0, int32_t col1, int32_t row1,
                                     double* out) {
  return guard([&] {
    require(f && out, "null pointer");
    *out = tersim::caliper_measure(f->frame, {col0, row0}, {col1, row1});
  });
}

tersim_status tersim_read_vessel(const tersim_frame* f, tersim_vessel_reading* out) {
  return guard([&] {
    require(f && out, "null pointer");
    const auto r = tersim::read_vessel(f->frame);
    *out = {{r.anterior.col, r.anterior.row}, {r.posterior.col, r.posterior.row}, r.ap_diameter, r.thrombus_seen,
            r.wall_ratio};
  });
}

// ---- wire protocol ------------------------------------------------------------------------

uint32_t tersim_crc32(const uint8_t* data, size_t size) {
  if (!data) return tersim::crc32_ieee({});
  return tersim::crc32_ieee({data, size});
}

tersim_status tersim_encode_pose_command(const tersim_pose* pose, uint32_t seq, uint64_t timestamp_us, uint8_t** out,
                                         size_t* out_size) {
  if (!pose) return guard([] { require(false, "null pose"); });
  return encode_to(tersim::PoseCommand{to_pose(*pose)}, seq, timestamp_us, out, out_size);
}

tersim_status tersim_encode_force_sample(const double force[3], uint32_t seq, uint64_t timestamp_us, uint8_t** out,
                                         size_t* out_size) {
  if (!force) return guard([] { require(false, "null force"); });
  return encode_to(tersim::ForceSample{{force[0], force[1], force[2]}}, seq, timestamp_us, out, out_size);
}

tersim_status tersim_encode_frame(const tersim_frame* f, uint32_t seq, uint64_t timestamp_us, uint8_t** out,
                                  size_t* out_size) {
  return guard([&] {
    require(f != nullptr, "null frame");
    emit_bytes(tersim::encode(tersim::to_wire(f->frame), seq, timestamp_us), out, out_size);
  });
}

tersim_status tersim_encode_heartbeat(uint32_t seq, uint64_t timestamp_us, uint8_t** out, size_t* out_size) {
  return encode_to(tersim::Heartbeat{}, seq, timestamp_us, out, out_size);
}

tersim_status tersim_encode_session_control(tersim_session_op op, uint32_t seq, uint64_t timestamp_us, uint8_t** out,
                                            size_t* out_size) {
  return guard([&] {
    require(op >= TERSIM_OP_HELLO && op <= TERSIM_OP_BYE, "unknown session op");
    emit_bytes(tersim::encode(tersim::SessionControl{static_cast<tersim::SessionOp>(op)}, seq, timestamp_us), out,
               out_size);
  });
}

tersim_status tersim_encode_status_report(uint64_t rx_bytes_per_s, uint64_t tx_bytes_per_s, uint64_t rtt_estimate_us,
                                          uint32_t seq, uint64_t timestamp_us, uint8_t** out, size_t* out_size) {
  return encode_to(tersim::StatusReport{rx_bytes_per_s, tx_bytes_per_s, rtt_estimate_us}, seq, timestamp_us, out,
                   out_size);
}

tersim_status tersim_decode(const uint8_t* data, size_t size, tersim_message** out) {
  return guard([&] {
    require(out != nullptr && (data != nullptr || size == 0), "null pointer");
    *out = new tersim_message{tersim::decode({data, size})};
  });
}

void tersim_message_free(tersim_message* m) { delete m; }

tersim_message_type tersim_message_get_type(const tersim_message* m) {
  return m ? static_cast<tersim_message_type>(m->env.type()) : TERSIM_MSG_HEARTBEAT;
}
uint32_t tersim_message_seq(const tersim_message* m) { return m ? m->env.seq : 0; }
uint64_t tersim_message_timestamp(const tersim_message* m) { return m ? m->env.timestamp_us : 0; }

tersim_status tersim_message_pose(const tersim_message* m, tersim_pose* out) {
  return guard([&] {
    require(out != nullptr, "null output pointer");
    *out = from_pose(body_as<tersim::PoseCommand>(m).pose);
  });
}

tersim_status tersim_message_force(const tersim_message* m, double out[3]) {
  return guard([&] {
    require(out != nullptr, "null output pointer");
    const auto& f = body_as<tersim::ForceSample>(m).force;
    for (int i = 0; i < 3; ++i) out[i] = f[i];
  });
}

tersim_status tersim_message_session_op(const tersim_message* m, tersim_session_op* out) {
  return guard([&] {
    require(out != nullptr, "null output pointer");
    *out = static_cast<tersim_session_op>(body_as<tersim::SessionControl>(m).op);
  });
}

tersim_status tersim_message_status_report(const tersim_message* m, uint64_t* rx_bytes_per_s, uint64_t* tx_bytes_per_s,
                                           uint64_t* rtt_estimate_us) {
  return guard([&] {
    const auto& s = body_as<tersim::StatusReport>(m);
    if (rx_bytes_per_s) *rx_bytes_per_s = s.rx_bytes_per_s;
    if (tx_bytes_per_s) *tx_bytes_per_s = s.tx_bytes_per_s;
    if (rtt_estimate_us) *rtt_estimate_us = s.rtt_estimate_us;
  });
}

tersim_status tersim_message_frame(const tersim_message* m, const tersim_pose* pose, tersim_frame** out) {
  return guard([&] {
    require(pose && out, "null pointer");
    *out = new tersim_frame{tersim::from_wire(body_as<tersim::UsFrameMsg>(m), to_pose(*pose))};
  });
}

// ---- network channel ----------------------------------------------------------------------

tersim_status tersim_channel_preset(const char* name, tersim_channel_params* out) {
  return guard([&] {
    require(name && out, "null pointer");
    const auto p = tersim::channel_preset(name);
    *out = {p.base_delay, p.jitter, p.loss_prob, p.seed, 0, 0, 0};
  });
}

tersim_status tersim_channel_create(const tersim_channel_params* params, tersim_channel** out) {
  return guard([&] {
    require(params && out, "null pointer");
    tersim::ChannelParams p{params->base_delay, params->jitter, params->loss_prob, params->seed, std::nullopt};
    if (params->has_outage)
      p.outage = tersim::Outage{tersim::SimTime{params->outage_start_us}, tersim::SimTime{params->outage_end_us}};
    *out = new tersim_channel(p);
  });
}

void tersim_channel_free(tersim_channel* c) { delete c; }

tersim_status tersim_channel_send(tersim_channel* c, const uint8_t* data, size_t size, int64_t now_us) {
  return guard([&] {
    require(c != nullptr && (data != nullptr || size == 0), "null pointer");
    c->ch.send(std::vector<std::uint8_t>(data, data + size), tersim::SimTime{now_us});
  });
}

tersim_status tersim_channel_poll(tersim_channel* c, int64_t now_us, size_t* ready) {
  return guard([&] {
    require(c != nullptr, "null channel");
    for (auto& m : c->ch.poll(tersim::SimTime{now_us})) c->ready.push_back(std::move(m));
    if (ready) *ready = c->ready.size();
  });
}

tersim_status tersim_channel_pop(tersim_channel* c, uint8_t** out, size_t* out_size) {
  return guard([&] {
    require(c != nullptr, "null channel");
    require(!c->ready.empty(), "no message ready");
    emit_bytes(c->ready.front(), out, out_size);
    c->ready.pop_front();
  });
}

tersim_status tersim_channel_get_stats(const tersim_channel* c, tersim_channel_stats* out) {
  return guard([&] {
    require(c && out, "null pointer");
    *out = {c->ch.sent(), c->ch.delivered(), c->ch.dropped(), static_cast<uint64_t>(c->ch.in_flight())};
  });
}

// ---- statistics ---------------------------------------------------------------------------

tersim_status tersim_pearson_r(const double* bedside, const double* remote, size_t n, double* r, double* p_value) {
  return guard([&] {
    const auto res = tersim::pearson_r(pairs_of(bedside, remote, n));
    if (r) *r = res.r;
    if (p_value) *p_value = res.p_value;
  });
}

tersim_status tersim_icc_2_1(const double* bedside, const double* remote, size_t n, double* out) {
  return guard([&] {
    require(out != nullptr, "null output pointer");
    *out = tersim::icc_2_1(pairs_of(bedside, remote, n));
  });
}

tersim_status tersim_cohen_kappa(const double* table, size_t k, tersim_kappa* out) {
  return guard([&] { fill_kappa(tersim::cohen_kappa(table_of(table, k)), out); });
}

tersim_status tersim_weighted_kappa(const double* table, size_t k, tersim_kappa_weights weights, tersim_kappa* out) {
  return guard([&] {
    require(weights == TERSIM_KAPPA_LINEAR || weights == TERSIM_KAPPA_QUADRATIC, "unknown weights");
    const auto w = weights == TERSIM_KAPPA_LINEAR ? tersim::KappaWeights::kLinear : tersim::KappaWeights::kQuadratic;
    fill_kappa(tersim::weighted_kappa(table_of(table, k), w), out);
  });
}

tersim_status tersim_relative_errors(const double* bedside, const double* remote, size_t n, double* errors_out,
                                     double* median, double* min, double* max) {
  return guard([&] {
    const auto re = tersim::relative_errors(pairs_of(bedside, remote, n));
    if (errors_out) std::copy(re.errors.begin(), re.errors.end(), errors_out);
    if (median) *median = re.median;
    if (min) *min = re.min;
    if (max) *max = re.max;
  });
}

tersim_status tersim_abs_diff_buckets(const double* bedside, const double* remote, size_t n, double cut_lo,
                                      double cut_hi, size_t counts_out[3]) {
  return guard([&] {
    require(counts_out != nullptr, "null output pointer");
    const auto b = tersim::abs_diff_buckets(pairs_of(bedside, remote, n), {cut_lo, cut_hi});
    std::copy(b.counts.begin(), b.counts.end(), counts_out);
  });
}

tersim_status tersim_paired_t_test(const double* bedside, const double* remote, size_t n, double* t, double* p_value,
                                   double* mean_diff) {
  return guard([&] {
    const auto res = tersim::paired_t_test(pairs_of(bedside, remote, n));
    if (t) *t = res.t;
    if (p_value) *p_value = res.p_value;
    if (mean_diff) *mean_diff = res.mean_diff;
  });
}

tersim_status tersim_student_t_two_sided_p(double t, double df, double* out) {
  return guard([&] {
    require(out != nullptr, "null output pointer");
    *out = tersim::student_t_two_sided_p(t, df);
  });
}

// ---- commands -----------------------------------------------------------------------------

tersim_status tersim_run_exam(const char* scenario_path, const tersim_run_options* opts, char** json_out,
                              char** table_out) {
  bool failed = false;
  const tersim_status st = guard([&] {
    require(scenario_path != nullptr, "null scenario path");
    const auto sc = load_input([&] { return tersim::load_scenario(scenario_path); });
    tersim::ChannelParams channel = sc.channel;
    std::uint64_t seed = sc.seed;
    if (opts && opts->channel_preset) channel = tersim::apply_channel_preset(channel, opts->channel_preset);
    if (opts && opts->has_seed) seed = opts->seed;
    spdlog::info("exam '{}': {} stations, seed {}", sc.name, sc.sweep.size(), seed);
    const auto result = tersim::run_exam(sc, channel, seed, sc.name);
    if (opts && opts->out_dir) tersim::write_exam_outputs(result, opts->out_dir);
    if (json_out) *json_out = dup_string(tersim::exam_json(result).dump(2));
    if (table_out) *table_out = dup_string(exam_table(result));
    if (!result.remote.completed) {
      failed = true;
      g_last_error = "remote session failed: " + result.remote.failure;
    }
  });
  if (st == TERSIM_OK && failed) return TERSIM_ERR_SESSION_FAILURE;
  return st;
}

tersim_status tersim_run_campaign(const char* cohort_path, const tersim_run_options* opts, char** json_out,
                                  char** table_out) {
  return guard([&] {
    tersim::CohortSpec spec;
    if (cohort_path) spec = load_input([&] { return tersim::load_cohort(cohort_path); });
    if (opts && opts->channel_preset) {
      spec.channel = tersim::apply_channel_preset(spec.channel, opts->channel_preset);
      spec.channel_name = opts->channel_preset;
    }
    if (opts && opts->has_seed) spec.seed = opts->seed;
    spdlog::info("campaign: {} patients, seed {}, channel {}", spec.n_patients, spec.seed, spec.channel_name);
    const auto result = tersim::run_campaign(spec, [](std::size_t done, std::size_t total, const std::string& id) {
      spdlog::debug("patient {} done ({}/{})", id, done, total);
    });
    if (opts && opts->out_dir) tersim::write_campaign_outputs(result, spec, opts->out_dir);
    if (json_out) *json_out = dup_string(tersim::campaign_json(result, spec).dump(2));
    if (table_out) {
      std::string t = tersim::format_report_table(result.report);
      t += fmt::format("{:<34} {}/{}\n", "completed exams", spec.n_patients - result.failed.size(), spec.n_patients);
      for (const auto& f : result.failed) t += fmt::format("  failed {}: {}\n", f.patient_id, f.reason);
      *table_out = dup_string(t);
    }
  });
}

tersim_status tersim_run_stats(const char* records_path, char** json_out, char** table_out) {
  return guard([&] {
    require(records_path != nullptr, "null records path");
    std::ifstream in(records_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kParse, std::string("cannot open records file ") + records_path);
    const auto records = tersim::read_records_csv(in);
    tersim::StudyReport report;
    try {
      report = tersim::campaign_report(records);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kInvalidArgument) throw Error(ErrorCode::kParse, e.what());
      throw;
    }
    if (json_out) *json_out = dup_string(report.json.dump(2));
    if (table_out) *table_out = dup_string(tersim::format_report_table(report));
  });
}

// ---- slave server -------------------------------------------------------------------------

tersim_status tersim_server_create(const char* phantom_preset, const char* channel_preset, const char* bind_address,
                                   uint16_t port, tersim_server** out) {
  return guard([&] {
    require(out != nullptr, "null output pointer");
    tersim::ServeConfig cfg;
    if (phantom_preset) {
      cfg.phantom = tersim::phantom_preset(phantom_preset);
      cfg.phantom_name = phantom_preset;
    }
    if (channel_preset) {
      cfg.channel = tersim::channel_preset(channel_preset);
      cfg.channel_name = channel_preset;
    }
    if (bind_address) cfg.bind_address = bind_address;
    cfg.port = port;
    auto s = std::make_unique<tersim_server>();
    s->server = std::make_unique<tersim::Server>(cfg);
    *out = s.release();
  });
}

uint16_t tersim_server_port(const tersim_server* s) { return s ? s->server->port() : 0; }

tersim_status tersim_server_run(tersim_server* s) {
  return guard([&] {
    require(s != nullptr, "null server");
    s->server->run();
  });
}

void tersim_server_stop(tersim_server* s) {
  if (s) s->server->stop();
}

tersim_status tersim_server_status(const tersim_server* s, char** json_out) {
  return guard([&] {
    require(s && json_out, "null pointer");
    *json_out = dup_string(s->server->status().dump());
  });
}

void tersim_server_destroy(tersim_server* s) { delete s; }

}  // extern "C"
