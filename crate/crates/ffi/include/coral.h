#ifndef CORAL_H
#define CORAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CoralStatus {
  CORAL_STATUS_OK = 0,
  CORAL_STATUS_NULL_POINTER = 1,
  /**
   * Bad or insufficient input data.
   */
  CORAL_STATUS_DATA_ERROR = 2,
  /**
   * Bad parameters.
   */
  CORAL_STATUS_CONFIG_ERROR = 3,
  /**
   * A buffer passed in is too small.
   */
  CORAL_STATUS_BUFFER_TOO_SMALL = 4,
  CORAL_STATUS_PANIC = 5,
} CoralStatus;

/**
 * Point cloud handle.
 */
typedef struct CoralCloud CoralCloud;

/**
 * Trained classifier handle.
 */
typedef struct CoralModel CoralModel;

/**
 * Neighborhood and aggregation settings of the entropy measure.
 */
typedef struct CoralEntropyParams {
  double r_min;
  double r_max;
  /**
   * Angular resolution in radians; 0 keeps the radius fixed at `r_min`.
   */
  double alpha;
  double epsilon;
  double e_reject;
  /**
   * 0 = mean, 1 = median.
   */
  uint32_t aggregate;
  /**
   * 0 selects the default of `dim + 2`.
   */
  size_t min_neighbors;
} CoralEntropyParams;

typedef struct CoralRadarParams {
  size_t k;
  double z_min;
  size_t w;
  double min_range;
} CoralRadarParams;

typedef struct CoralQuality {
  double q;
  double h_joint;
  double h_sep;
  size_t n_valid_joint;
  size_t n_valid_sep;
} CoralQuality;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *coral_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *coral_version(void);

/**
 * Fixed 0.3 m radius, no floor, no rejection, mean aggregate.
 */
struct CoralEntropyParams coral_params_default(void);

struct CoralRadarParams coral_radar_params_default(void);

/**
 * Builds a cloud from `n` points stored row-major (`n * dim` doubles).
 * `origin` holds `dim` doubles or is null for the zero origin.
 *
 * # Safety
 * `coords` must point to `n * dim` doubles, `origin` to `dim` doubles or be
 * null, and `out` must be writable.
 */
enum CoralStatus coral_cloud_new(size_t dim,
                                 const double *coords,
                                 size_t n,
                                 const double *origin,
                                 struct CoralCloud **out);

/**
 * Reads a PCLOUD text file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum CoralStatus coral_cloud_read(const char *path, struct CoralCloud **out);

/**
 * # Safety
 * `cloud` must be a live handle and `path` a NUL-terminated string.
 */
enum CoralStatus coral_cloud_write(const struct CoralCloud *cloud, const char *path);

/**
 * # Safety
 * `cloud` must be null or a handle not yet freed.
 */
void coral_cloud_free(struct CoralCloud *cloud);

/**
 * Number of points; 0 for a null handle.
 *
 * # Safety
 * `cloud` must be null or a live handle.
 */
size_t coral_cloud_len(const struct CoralCloud *cloud);

/**
 * 2 or 3; 0 for a null handle.
 *
 * # Safety
 * `cloud` must be null or a live handle.
 */
size_t coral_cloud_dim(const struct CoralCloud *cloud);

/**
 * Copies the points row-major into `out`, which holds `cap` doubles.
 *
 * # Safety
 * `cloud` must be a live handle and `out` must hold `cap` doubles.
 */
enum CoralStatus coral_cloud_coords(const struct CoralCloud *cloud, double *out, size_t cap);

/**
 * New cloud with `cloud` moved by the rigid transform given as a
 * translation `t` (3 doubles) and unit quaternion `q = (w, x, y, z)`.
 * For 2D clouds the rotation must be about z and `t[2]` is ignored.
 *
 * # Safety
 * `cloud` must be a live handle, `t` and `q` must hold 3 and 4 doubles,
 * and `out` must be writable.
 */
enum CoralStatus coral_cloud_transform(const struct CoralCloud *cloud,
                                       const double *t,
                                       const double *q,
                                       struct CoralCloud **out);

/**
 * Joint and separate entropies of the pair `a`, `b` (both in a common
 * frame) and their difference. `params` may be null for the defaults.
 *
 * # Safety
 * `a` and `b` must be live handles, `params` null or valid, and `out`
 * writable.
 */
enum CoralStatus coral_quality(const struct CoralCloud *a,
                               const struct CoralCloud *b,
                               const struct CoralEntropyParams *params,
                               struct CoralQuality *out);

/**
 * Per-point quality for the points of `a` followed by those of `b`; NaN
 * marks points without a valid entropy. `out` must hold
 * `len(a) + len(b)` doubles.
 *
 * # Safety
 * `a` and `b` must be live handles, `params` null or valid, and `out`
 * must hold `cap` doubles.
 */
enum CoralStatus coral_per_point_quality(const struct CoralCloud *a,
                                         const struct CoralCloud *b,
                                         const struct CoralEntropyParams *params,
                                         double *out,
                                         size_t cap);

/**
 * Classifier inputs of any metric (`coral`, `coral-median`, `mme`,
 * `ndt`, `rel-ndt`, `cfear-p2p`, `cfear-p2l`, `cfear-p2d`, `cen-p2p`).
 * `params_json` may be null for the defaults. Writes up to 3 values to
 * `out` and their count to `arity`.
 *
 * # Safety
 * `a` and `b` must be live handles, strings NUL-terminated, `out` must
 * hold 3 doubles and `arity` be writable.
 */
enum CoralStatus coral_metric_features(const struct CoralCloud *a,
                                       const struct CoralCloud *b,
                                       const char *metric,
                                       const char *params_json,
                                       double *out,
                                       size_t *arity);

/**
 * Radar point cloud from a polar sweep of `n_azimuth` rows by `n_range`
 * range bins (row-major), range resolution `gamma` meters per bin. With
 * `dense` every k-strongest return is kept, otherwise only intensity
 * peaks. `params` may be null for the defaults.
 *
 * # Safety
 * `intensities` must hold `n_azimuth * n_range` doubles, `params` be null
 * or valid, and `out` writable.
 */
enum CoralStatus coral_radar_extract(const double *intensities,
                                     size_t n_azimuth,
                                     size_t n_range,
                                     double gamma,
                                     const struct CoralRadarParams *params,
                                     bool dense,
                                     struct CoralCloud **out);

/**
 * Loads a model written by `coral train`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum CoralStatus coral_model_from_json(const char *json, struct CoralModel **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void coral_model_free(struct CoralModel *model);

/**
 * Probability that a pair with these features is aligned, and the
 * thresholded decision.
 *
 * # Safety
 * `model` must be a live handle, `features` must hold `n` doubles, and
 * `p` and `aligned` must be writable.
 */
enum CoralStatus coral_model_predict(const struct CoralModel *model,
                                     const double *features,
                                     size_t n,
                                     double *p,
                                     bool *aligned);

/**
 * Computes the model's metric on `a`, `b` with the parameters stored in
 * the model, then classifies.
 *
 * # Safety
 * `model`, `a` and `b` must be live handles; `p` and `aligned` writable.
 */
enum CoralStatus coral_model_classify(const struct CoralModel *model,
                                      const struct CoralCloud *a,
                                      const struct CoralCloud *b,
                                      double *p,
                                      bool *aligned);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CORAL_H */
