/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef POSEGUIDE_H
#define POSEGUIDE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PgStatus {
  PG_STATUS_OK = 0,
  PG_STATUS_NULL_ARGUMENT = 1,
  PG_STATUS_INVALID_UTF8 = 2,
  PG_STATUS_PARSE_ERROR = 3,
  PG_STATUS_UNSUPPORTED_SCHEMA = 4,
  PG_STATUS_INVALID_ARGUMENT = 5,
  PG_STATUS_BEHIND_CAMERA = 6,
  PG_STATUS_SESSION_CLOSED = 7,
  PG_STATUS_MODE_MISMATCH = 8,
  PG_STATUS_NO_BOARD = 9,
  PG_STATUS_NOT_COMPLETE = 10,
  PG_STATUS_CALIBRATION_FAILED = 11,
  PG_STATUS_BUFFER_TOO_SMALL = 12,
  /**
   * Every candidate pose set was flagged degenerate.
   */
  PG_STATUS_ALL_DEGENERATE = 13,
  PG_STATUS_INTERNAL = 14,
} PgStatus;

typedef enum PgCaptureMode {
  PG_CAPTURE_MODE_AUTO = 0,
  PG_CAPTURE_MODE_MANUAL = 1,
} PgCaptureMode;

typedef enum PgPhase {
  PG_PHASE_AWAITING_MATCH = 0,
  PG_PHASE_MATCHED_DWELLING = 1,
  PG_PHASE_CAPTURING = 2,
  PG_PHASE_COMPLETE = 3,
  PG_PHASE_ABORTED = 4,
} PgPhase;

typedef struct PgSession PgSession;

/**
 * Intrinsics in `fx, fy, cx, cy, k1, k2, k3, p1, p2` order.
 */
typedef struct PgIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
  double k1;
  double k2;
  double k3;
  double p1;
  double p2;
} PgIntrinsics;

/**
 * Board-to-camera transform; `rotation` is axis-angle in radians.
 */
typedef struct PgPose {
  double rotation[3];
  double translation[3];
} PgPose;

/**
 * Zero or non-finite fields select the defaults.
 */
typedef struct PgSessionOptions {
  double match_threshold;
  enum PgCaptureMode capture_mode;
  uint32_t dwell_frames;
} PgSessionOptions;

typedef struct PgCorner {
  /**
   * Row-major board corner index.
   */
  uint32_t index;
  double u;
  double v;
} PgCorner;

/**
 * Snapshot of a session after an update.
 */
typedef struct PgProgress {
  enum PgPhase phase;
  size_t current_target;
  size_t total_targets;
  size_t captured;
  size_t dwell_count;
  /**
   * False when the last frame had no usable board.
   */
  bool has_match;
  /**
   * Outer-four match distance, pixels; NaN when `has_match` is false.
   */
  double distance;
  /**
   * `expected - detected` per outer corner as `u0, v0, u1, v1, ...`.
   */
  double adjustments[8];
  /**
   * True when the last update committed a capture.
   */
  bool captured_now;
} PgProgress;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version written into and required of every JSON document.
 */
uint32_t pg_schema_version(void);

/**
 * Message of the last failure on this thread, or NULL. Owned by the
 * library; valid until the next failing call on the same thread.
 */
const char *pg_last_error(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * Safety: `s` must be NULL or a pointer returned by this library, not yet freed.
 */
void pg_string_free(char *s);

/**
 * Projects the board-frame `point[3]` through `pose` and `intrinsics` into
 * `out_pixel[2]`.
 *
 * Safety: Pointers must be valid for the documented element counts.
 */
enum PgStatus pg_project_point(const struct PgIntrinsics *intrinsics,
                               const struct PgPose *pose,
                               const double *point,
                               double *out_pixel);

/**
 * Euclidean distance between two intrinsic vectors.
 *
 * Safety: Pointers must be valid.
 */
enum PgStatus pg_param_error(const struct PgIntrinsics *estimate,
                             const struct PgIntrinsics *reference,
                             double *out);

/**
 * `1 / (alpha * mre + beta * param_err)`.
 *
 * Safety: `out` must be valid.
 */
enum PgStatus pg_score(double mre, double param_err, double alpha, double beta, double *out);

/**
 * Runs the candidate experiment described by `request_json` and writes the
 * selected pose-set document to `*out_json`.
 *
 * The request is `{"schema_version", "camera", "space", "config",
 * "noise_sigma"}`; `config` and `noise_sigma` are optional.
 *
 * Safety: `request_json` must be a NUL-terminated string; `out_json` must be valid.
 */
enum PgStatus pg_optimize_poses(const char *request_json, char **out_json);

/**
 * Starts a session from a pose-set document. `options` may be NULL.
 *
 * Safety: `pose_set_json` must be a NUL-terminated string; `out` must be valid.
 */
enum PgStatus pg_session_new(const char *pose_set_json,
                             const struct PgSessionOptions *options,
                             struct PgSession **out);

/**
 * Releases a session. NULL is ignored.
 *
 * Safety: `session` must be NULL or a live handle from [`pg_session_new`].
 */
void pg_session_free(struct PgSession *session);

/**
 * Feeds one frame of detections. `out` may be NULL.
 *
 * Safety: `session` must be a live handle; `corners` must hold `count` elements.
 */
enum PgStatus pg_session_advance(struct PgSession *session,
                                 const struct PgCorner *corners,
                                 size_t count,
                                 uint64_t frame_token,
                                 struct PgProgress *out);

/**
 * Captures the current target from a full-board detection; manual mode
 * only. `out` may be NULL.
 *
 * Safety: As for [`pg_session_advance`].
 */
enum PgStatus pg_session_manual_capture(struct PgSession *session,
                                        const struct PgCorner *corners,
                                        size_t count,
                                        uint64_t frame_token,
                                        struct PgProgress *out);

/**
 * Safety: `session` and `out` must be valid.
 */
enum PgStatus pg_session_progress(const struct PgSession *session, struct PgProgress *out);

/**
 * Copies the current target's expected corners into `buf`.
 *
 * `*written` receives the corner count. With `buf` NULL only the count is
 * reported; a `capacity` below the count yields `BufferTooSmall`.
 *
 * Safety: `buf` must be NULL or hold `capacity` elements; `written` must be valid.
 */
enum PgStatus pg_session_target_corners(const struct PgSession *session,
                                        struct PgCorner *buf,
                                        size_t capacity,
                                        size_t *written);

/**
 * Calibrates a complete session. Writes the calibration document to
 * `*out_json` and, when `out_intrinsics` is not NULL, the estimate.
 *
 * Safety: `session` and `out_json` must be valid; `out_intrinsics` may be NULL.
 */
enum PgStatus pg_session_finalize(const struct PgSession *session,
                                  char **out_json,
                                  struct PgIntrinsics *out_intrinsics);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POSEGUIDE_H */
