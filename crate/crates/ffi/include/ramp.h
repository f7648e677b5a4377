#ifndef RAMP_H
#define RAMP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum RampStatus {
  RAMP_STATUS_OK = 0,
  RAMP_STATUS_NULL_POINTER = 1,
  RAMP_STATUS_INVALID_INPUT = 2,
  RAMP_STATUS_EMPTY_CLOUD = 3,
  RAMP_STATUS_PARSE = 4,
  RAMP_STATUS_BUFFER_TOO_SMALL = 5,
  RAMP_STATUS_INTERNAL = 6,
} RampStatus;

/**
 * Kinematic chain handle.
 */
typedef struct RampChain RampChain;

/**
 * Scene point cloud handle.
 */
typedef struct RampCloud RampCloud;

/**
 * Trajectory follower handle.
 */
typedef struct RampFollower RampFollower;

/**
 * MPPI trajectory generator handle.
 */
typedef struct RampGenerator RampGenerator;

/**
 * C-SDF offsets in meters.
 */
typedef struct RampCsdfParams {
  double rho;
  double r;
} RampCsdfParams;

/**
 * Summary of one generator iteration.
 */
typedef struct RampIterationInfo {
  uint64_t generation;
  size_t horizon;
  /**
   * Number of waypoints of the published trajectory (horizon + 2).
   */
  size_t waypoints;
  double trajectory_min_csdf;
  double feasible_fraction;
  /**
   * 1 when the cloud was empty and collision costs were skipped.
   */
  int32_t cloud_empty;
} RampIterationInfo;

/**
 * Diagnostics of one follower tick.
 */
typedef struct RampTickInfo {
  /**
   * C-SDF at the current configuration; NaN when the cloud was empty.
   */
  double csdf;
  double s_star;
  double u_norm;
  /**
   * Constraint value; NaN when the constraint is inactive.
   */
  double h;
  uint64_t generation;
  int32_t at_goal;
  int32_t degenerate_gradient;
} RampTickInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, NUL-terminated into
 * `buf`. Returns the message length in bytes (excluding NUL); when `cap` is
 * too small the message is truncated. Pass a null `buf` to query the length.
 */
size_t ramp_last_error_message(char *buf, size_t cap);

/**
 * Static description of a status code.
 */
const char *ramp_status_string(enum RampStatus status);

/**
 * Loads a bundled model (`"planar3"`, `"spatial7"`) or a model JSON file.
 */
enum RampStatus ramp_chain_load(const char *name_or_path, struct RampChain **out);

/**
 * Builds a chain from model JSON text.
 */
enum RampStatus ramp_chain_from_json(const char *json, struct RampChain **out);

void ramp_chain_free(struct RampChain *chain);

enum RampStatus ramp_chain_dof(const struct RampChain *chain, size_t *out);

/**
 * Control points at `q` as packed triples. `count` receives the number of
 * points; if `cap_points` is smaller, nothing is written and
 * `BufferTooSmall` is returned.
 */
enum RampStatus ramp_chain_control_points(const struct RampChain *chain,
                                          const double *q,
                                          size_t dof,
                                          double *out_xyz,
                                          size_t cap_points,
                                          size_t *count);

/**
 * Copies `n_points` packed triples into a new cloud. An empty cloud is
 * allowed; C-SDF queries on it fail with `EmptyCloud`.
 */
enum RampStatus ramp_cloud_new(const double *xyz, size_t n_points, struct RampCloud **out);

void ramp_cloud_free(struct RampCloud *cloud);

enum RampStatus ramp_cloud_len(const struct RampCloud *cloud, size_t *out);

/**
 * C-SDF value at `q`, and its gradient into `grad` (length `dof`) when
 * `grad` is non-null. `params` may be null for the defaults. `degenerate`
 * (optional) is set to 1 when the gradient is undefined and reported as zero.
 */
enum RampStatus ramp_csdf(const struct RampChain *chain,
                          const struct RampCloud *cloud,
                          const double *q,
                          size_t dof,
                          const struct RampCsdfParams *params,
                          double *value,
                          double *grad,
                          int32_t *degenerate);

/**
 * New generator towards `goal`. `mppi_json` (planner parameters) and
 * `csdf_params` may be null for the defaults.
 */
enum RampStatus ramp_generator_new(const struct RampChain *chain,
                                   const double *goal,
                                   size_t dof,
                                   const char *mppi_json,
                                   const struct RampCsdfParams *csdf_params_,
                                   struct RampGenerator **out);

void ramp_generator_free(struct RampGenerator *generator);

/**
 * One MPPI iteration from `q_now` against `cloud` at time `now` (seconds).
 * `info` may be null.
 */
enum RampStatus ramp_generator_iterate(struct RampGenerator *generator,
                                       const double *q_now,
                                       size_t dof,
                                       const struct RampCloud *cloud,
                                       double now,
                                       struct RampIterationInfo *info);

/**
 * Copies the latest published trajectory (row-major, `waypoints x dof`).
 * `waypoints` receives the count; `BufferTooSmall` if `cap_values` is less
 * than `waypoints * dof`. Fails with `InvalidInput` before the first iteration.
 */
enum RampStatus ramp_generator_trajectory(const struct RampGenerator *generator,
                                          double *out,
                                          size_t cap_values,
                                          size_t *waypoints);

/**
 * New follower. `follower_json` and `csdf_params` may be null for defaults.
 */
enum RampStatus ramp_follower_new(const struct RampChain *chain,
                                  const char *follower_json,
                                  const struct RampCsdfParams *csdf_params_,
                                  struct RampFollower **out);

void ramp_follower_free(struct RampFollower *follower);

/**
 * One control tick at `q`. The reference is the latest trajectory of
 * `generator` (may be null to keep the current one). Writes the velocity
 * command into `u` (length `dof`); `info` may be null.
 */
enum RampStatus ramp_follower_tick(struct RampFollower *follower,
                                   const double *q,
                                   size_t dof,
                                   const struct RampGenerator *generator,
                                   const struct RampCloud *cloud,
                                   double *u,
                                   struct RampTickInfo *info);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RAMP_H */
