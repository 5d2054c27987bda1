/*
 * Copyright (C) 2026 tersim contributors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the tele-echography simulator.
 *
 * Conventions:
 *   - Every fallible call returns tersim_status; TERSIM_OK is 0.
 *   - On failure, tersim_last_error_message() describes the error. The message is
 *     thread-local and valid until the next failing call on the same thread.
 *   - Objects are opaque handles released with their matching *_free / *_destroy call.
 *     Passing NULL to a release function is a no-op.
 *   - Byte buffers and strings returned through out-parameters are owned by the caller
 *     and released with tersim_bytes_free / tersim_string_free.
 *   - Units are SI: meters, seconds, newtons, radians. Times are integer microseconds.
 *   - Quaternions are stored w, x, y, z.
 */
#ifndef TERSIM_TERSIM_H
#define TERSIM_TERSIM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(TERSIM_BUILDING)
#    define TERSIM_API __declspec(dllexport)
#  else
#    define TERSIM_API __declspec(dllimport)
#  endif
#else
#  define TERSIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tersim_status {
  TERSIM_OK = 0,
  TERSIM_ERR_INVALID_ARGUMENT = 1,
  TERSIM_ERR_INVALID_POSE = 2,
  TERSIM_ERR_OUT_OF_RIG = 3,
  TERSIM_ERR_INCONSISTENT_LENGTHS = 4,
  TERSIM_ERR_NO_CONTACT = 5,
  TERSIM_ERR_NOT_FROZEN = 6,
  TERSIM_ERR_INSUFFICIENT_SWEEP = 7,
  TERSIM_ERR_OVERSIZE = 8,
  TERSIM_ERR_NOT_A_MESSAGE = 9,
  TERSIM_ERR_CORRUPT = 10,
  TERSIM_ERR_UNSUPPORTED = 11,
  TERSIM_ERR_TRUNCATED = 12,
  TERSIM_ERR_PROTOCOL_VIOLATION = 13,
  TERSIM_ERR_TOO_FEW = 14,
  TERSIM_ERR_DEGENERATE_VARIANCE = 15,
  TERSIM_ERR_UNDEFINED_KAPPA = 16,
  TERSIM_ERR_DIVISION_DEGENERATE = 17,
  TERSIM_ERR_UNPAIRED_RECORD = 18,
  TERSIM_ERR_SCENARIO_INVALID = 19,
  TERSIM_ERR_PARSE = 20,  /* malformed or unreadable input file */
  TERSIM_ERR_IO = 21,     /* output could not be written */
  TERSIM_ERR_SESSION_FAILURE = 22,
  TERSIM_ERR_PORT_BUSY = 23,
  TERSIM_ERR_MEASUREMENT_FAILED = 24,
  TERSIM_ERR_INTERNAL = 25
} tersim_status;

TERSIM_API const char* tersim_version(void);
TERSIM_API const char* tersim_status_name(tersim_status s);
TERSIM_API const char* tersim_last_error_message(void);

/* "trace", "debug", "info", "warn", "error", "off". */
TERSIM_API tersim_status tersim_set_log_level(const char* level);

TERSIM_API void tersim_bytes_free(uint8_t* bytes);
TERSIM_API void tersim_string_free(char* s);

/* ---- kinematics ---------------------------------------------------------------------- */

typedef struct tersim_pose {
  double position[3];
  double orientation[4]; /* w, x, y, z */
} tersim_pose;

TERSIM_API tersim_status tersim_make_station_pose(double x, double y, double z, double tilt, tersim_pose* out);
TERSIM_API tersim_status tersim_clamp_to_workspace(const tersim_pose* in, tersim_pose* out);
TERSIM_API tersim_status tersim_inverse_kinematics(double x, double y, double cables_out[4]);
TERSIM_API tersim_status tersim_forward_kinematics(const double cables[4], double xy_out[2], double* residual_out);
TERSIM_API tersim_status tersim_step_toward(const tersim_pose* current, const tersim_pose* target, double dt,
                                            double v_max, double w_max, tersim_pose* out);

/* ---- phantom ------------------------------------------------------------------------- */

typedef struct tersim_phantom tersim_phantom;
typedef struct tersim_frame tersim_frame;

typedef struct tersim_ground_truth {
  int has_aaa;
  double max_ap_diameter;
  double max_ap_y;
  int has_thrombus;
  int iliac_extension;
  double iliac_ap_diameters[2]; /* left, right */
  int grade;                    /* 0 none, 1 segmentary, 2 diffuse */
} tersim_ground_truth;

typedef struct tersim_vessel_reading {
  int32_t anterior[2];  /* col, row */
  int32_t posterior[2]; /* col, row */
  double ap_diameter;
  int thrombus_seen;
  double wall_ratio;
} tersim_vessel_reading;

TERSIM_API tersim_status tersim_phantom_preset(const char* name, tersim_phantom** out);
TERSIM_API tersim_status tersim_phantom_load(const char* path, tersim_phantom** out);
TERSIM_API tersim_status tersim_phantom_parse(const char* text, tersim_phantom** out);
TERSIM_API void tersim_phantom_free(tersim_phantom* p);
TERSIM_API tersim_status tersim_phantom_ground_truth(const tersim_phantom* p, tersim_ground_truth* out);

TERSIM_API tersim_status tersim_render_frame(const tersim_phantom* p, const tersim_pose* pose, uint32_t frame_id,
                                             tersim_frame** out);
TERSIM_API void tersim_frame_free(tersim_frame* f);
TERSIM_API uint32_t tersim_frame_width(const tersim_frame* f);
TERSIM_API uint32_t tersim_frame_height(const tersim_frame* f);
TERSIM_API double tersim_frame_pixel_spacing(const tersim_frame* f);
TERSIM_API uint32_t tersim_frame_id(const tersim_frame* f);
TERSIM_API int tersim_frame_frozen(const tersim_frame* f);
TERSIM_API const uint8_t* tersim_frame_pixels(const tersim_frame* f); /* row-major, width * height */
TERSIM_API tersim_status tersim_frame_set_frozen(tersim_frame* f, int frozen);
TERSIM_API tersim_status tersim_frame_write_pgm(const tersim_frame* f, const char* path);
TERSIM_API tersim_status tersim_caliper_measure(const tersim_frame* f, int32_t col0, int32_t row0, int32_t col1,
                                                int32_t row1, double* out);
TERSIM_API tersim_status tersim_read_vessel(const tersim_frame* f, tersim_vessel_reading* out);

/* ---- wire protocol ------------------------------------------------------------------- */

typedef enum tersim_message_type {
  TERSIM_MSG_POSE_COMMAND = 1,
  TERSIM_MSG_FORCE_SAMPLE = 2,
  TERSIM_MSG_US_FRAME = 3,
  TERSIM_MSG_HEARTBEAT = 4,
  TERSIM_MSG_SESSION_CONTROL = 5,
  TERSIM_MSG_STATUS_REPORT = 6
} tersim_message_type;

typedef enum tersim_session_op {
  TERSIM_OP_HELLO = 0,
  TERSIM_OP_START = 1,
  TERSIM_OP_STOP = 2,
  TERSIM_OP_FREEZE = 3,
  TERSIM_OP_UNFREEZE = 4,
  TERSIM_OP_BYE = 5
} tersim_session_op;

typedef struct tersim_message tersim_message;

TERSIM_API uint32_t tersim_crc32(const uint8_t* data, size_t size);

TERSIM_API tersim_status tersim_encode_pose_command(const tersim_pose* pose, uint32_t seq, uint64_t timestamp_us,
                                                    uint8_t** out, size_t* out_size);
TERSIM_API tersim_status tersim_encode_force_sample(const double force[3], uint32_t seq, uint64_t timestamp_us,
                                                    uint8_t** out, size_t* out_size);
TERSIM_API tersim_status tersim_encode_frame(const tersim_frame* f, uint32_t seq, uint64_t timestamp_us, uint8_t** out,
                                             size_t* out_size);
TERSIM_API tersim_status tersim_encode_heartbeat(uint32_t seq, uint64_t timestamp_us, uint8_t** out, size_t* out_size);
TERSIM_API tersim_status tersim_encode_session_control(tersim_session_op op, uint32_t seq, uint64_t timestamp_us,
                                                       uint8_t** out, size_t* out_size);
TERSIM_API tersim_status tersim_encode_status_report(uint64_t rx_bytes_per_s, uint64_t tx_bytes_per_s,
                                                     uint64_t rtt_estimate_us, uint32_t seq, uint64_t timestamp_us,
                                                     uint8_t** out, size_t* out_size);

TERSIM_API tersim_status tersim_decode(const uint8_t* data, size_t size, tersim_message** out);
TERSIM_API void tersim_message_free(tersim_message* m);
TERSIM_API tersim_message_type tersim_message_get_type(const tersim_message* m);
TERSIM_API uint32_t tersim_message_seq(const tersim_message* m);
TERSIM_API uint64_t tersim_message_timestamp(const tersim_message* m);
/* Typed accessors fail with TERSIM_ERR_INVALID_ARGUMENT when the message has another type. */
TERSIM_API tersim_status tersim_message_pose(const tersim_message* m, tersim_pose* out);
TERSIM_API tersim_status tersim_message_force(const tersim_message* m, double out[3]);
TERSIM_API tersim_status tersim_message_session_op(const tersim_message* m, tersim_session_op* out);
TERSIM_API tersim_status tersim_message_status_report(const tersim_message* m, uint64_t* rx_bytes_per_s,
                                                      uint64_t* tx_bytes_per_s, uint64_t* rtt_estimate_us);
/* The frame is tagged with `pose`, the receiver's idea of where the probe is. */
TERSIM_API tersim_status tersim_message_frame(const tersim_message* m, const tersim_pose* pose, tersim_frame** out);

/* ---- network channel ----------------------------------------------------------------- */

typedef struct tersim_channel_params {
  double base_delay; /* seconds */
  double jitter;     /* seconds */
  double loss_prob;
  uint64_t seed;
  int has_outage;
  int64_t outage_start_us;
  int64_t outage_end_us;
} tersim_channel_params;

typedef struct tersim_channel tersim_channel;

typedef struct tersim_channel_stats {
  uint64_t sent;
  uint64_t delivered;
  uint64_t dropped;
  uint64_t in_flight;
} tersim_channel_stats;

TERSIM_API tersim_status tersim_channel_preset(const char* name, tersim_channel_params* out);
TERSIM_API tersim_status tersim_channel_create(const tersim_channel_params* params, tersim_channel** out);
TERSIM_API void tersim_channel_free(tersim_channel* c);
TERSIM_API tersim_status tersim_channel_send(tersim_channel* c, const uint8_t* data, size_t size, int64_t now_us);
/* Moves everything due at now_us to the ready queue; *ready receives the queue length. */
TERSIM_API tersim_status tersim_channel_poll(tersim_channel* c, int64_t now_us, size_t* ready);
/* Pops the oldest ready message; TERSIM_ERR_INVALID_ARGUMENT when the queue is empty. */
TERSIM_API tersim_status tersim_channel_pop(tersim_channel* c, uint8_t** out, size_t* out_size);
TERSIM_API tersim_status tersim_channel_get_stats(const tersim_channel* c, tersim_channel_stats* out);

/* ---- statistics ---------------------------------------------------------------------- */

typedef struct tersim_kappa {
  double kappa;
  double se;
  double ci95_lo;
  double ci95_hi;
  double p_observed;
  double p_expected;
} tersim_kappa;

typedef enum tersim_kappa_weights { TERSIM_KAPPA_LINEAR = 0, TERSIM_KAPPA_QUADRATIC = 1 } tersim_kappa_weights;

TERSIM_API tersim_status tersim_pearson_r(const double* bedside, const double* remote, size_t n, double* r,
                                          double* p_value);
TERSIM_API tersim_status tersim_icc_2_1(const double* bedside, const double* remote, size_t n, double* out);
/* `table` is k*k counts, row-major (rows: first rater). */
TERSIM_API tersim_status tersim_cohen_kappa(const double* table, size_t k, tersim_kappa* out);
TERSIM_API tersim_status tersim_weighted_kappa(const double* table, size_t k, tersim_kappa_weights weights,
                                               tersim_kappa* out);
/* errors_out must hold n values. */
TERSIM_API tersim_status tersim_relative_errors(const double* bedside, const double* remote, size_t n,
                                                double* errors_out, double* median, double* min, double* max);
TERSIM_API tersim_status tersim_abs_diff_buckets(const double* bedside, const double* remote, size_t n, double cut_lo,
                                                 double cut_hi, size_t counts_out[3]);
TERSIM_API tersim_status tersim_paired_t_test(const double* bedside, const double* remote, size_t n, double* t,
                                              double* p_value, double* mean_diff);
TERSIM_API tersim_status tersim_student_t_two_sided_p(double t, double df, double* out);

/* ---- commands ------------------------------------------------------------------------ */

/* Optional overrides; NULL or has_seed = 0 keeps the file's values. */
typedef struct tersim_run_options {
  const char* channel_preset;
  int has_seed;
  uint64_t seed;
  const char* out_dir; /* NULL: nothing written */
} tersim_run_options;

/* Runs both arms of one scenario. TERSIM_ERR_SESSION_FAILURE when the remote session did not
 * complete; the JSON summary is produced either way. */
TERSIM_API tersim_status tersim_run_exam(const char* scenario_path, const tersim_run_options* opts, char** json_out,
                                         char** table_out);

/* cohort_path may be NULL for the built-in default cohort. */
TERSIM_API tersim_status tersim_run_campaign(const char* cohort_path, const tersim_run_options* opts, char** json_out,
                                             char** table_out);

TERSIM_API tersim_status tersim_run_stats(const char* records_path, char** json_out, char** table_out);

/* ---- slave server -------------------------------------------------------------------- */

typedef struct tersim_server tersim_server;

/* port 0 picks a free port. */
TERSIM_API tersim_status tersim_server_create(const char* phantom_preset, const char* channel_preset,
                                              const char* bind_address, uint16_t port, tersim_server** out);
TERSIM_API uint16_t tersim_server_port(const tersim_server* s);
/* Blocks until tersim_server_stop() is called from another thread. */
TERSIM_API tersim_status tersim_server_run(tersim_server* s);
TERSIM_API void tersim_server_stop(tersim_server* s);
TERSIM_API tersim_status tersim_server_status(const tersim_server* s, char** json_out);
TERSIM_API void tersim_server_destroy(tersim_server* s);

#ifdef __cplusplus
}
#endif

#endif /* TERSIM_TERSIM_H */
