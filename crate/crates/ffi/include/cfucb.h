#ifndef CFUCB_H
#define CFUCB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CfucbStatus {
  CFUCB_STATUS_OK = 0,
  CFUCB_STATUS_NULL_POINTER = 1,
  CFUCB_STATUS_INVALID_UTF8 = 2,
  CFUCB_STATUS_INVALID_CONFIG = 3,
  CFUCB_STATUS_DOMAIN_ERROR = 4,
  CFUCB_STATUS_NO_CONVERGENCE = 5,
  CFUCB_STATUS_NOT_RUN = 6,
  CFUCB_STATUS_BUFFER_TOO_SMALL = 7,
  CFUCB_STATUS_IO = 8,
  CFUCB_STATUS_INTERNAL = 9,
  CFUCB_STATUS_PANIC = 10,
} CfucbStatus;

/**
 * Series selector for [`cfucb_experiment_copy_series`].
 */
typedef enum CfucbGroup {
  CFUCB_GROUP_OPTED_IN = 0,
  CFUCB_GROUP_OPTED_OUT = 1,
  CFUCB_GROUP_ALL = 2,
} CfucbGroup;

/**
 * Opaque experiment handle.
 */
typedef struct CfucbExperiment CfucbExperiment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null.
 *
 * The pointer stays valid until the next cfucb call on this thread.
 */
const char *cfucb_last_error(void);

/**
 * Parses a config document (empty string for defaults) into a new handle.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CfucbStatus cfucb_experiment_new(const char *config_toml, struct CfucbExperiment **out);

/**
 * # Safety
 * `handle` must come from [`cfucb_experiment_new`] and not be used afterwards.
 */
void cfucb_experiment_free(struct CfucbExperiment *handle);

/**
 * Overrides the base seed and discards any previous result.
 *
 * # Safety
 * `handle` must be a live handle.
 */
enum CfucbStatus cfucb_experiment_set_seed(struct CfucbExperiment *handle, uint64_t seed);

/**
 * Runs all replications.
 *
 * # Safety
 * `handle` must be a live handle.
 */
enum CfucbStatus cfucb_experiment_run(struct CfucbExperiment *handle);

/**
 * Number of events in the averaged regret series.
 *
 * # Safety
 * `handle` must be a live handle and `len` a valid pointer.
 */
enum CfucbStatus cfucb_experiment_series_len(const struct CfucbExperiment *handle, size_t *len);

/**
 * Copies the averaged cumulative regret of `group` into `buf`.
 *
 * # Safety
 * `buf` must point to `capacity` writable doubles.
 */
enum CfucbStatus cfucb_experiment_copy_series(const struct CfucbExperiment *handle,
                                              enum CfucbGroup group,
                                              double *buf,
                                              size_t capacity);

/**
 * Summary as a JSON document. Free with [`cfucb_string_free`].
 *
 * # Safety
 * `handle` must be a live handle and `out` a valid pointer.
 */
enum CfucbStatus cfucb_experiment_summary_json(const struct CfucbExperiment *handle, char **out);

/**
 * Writes `regret.csv` and `summary.json` into `dir`.
 *
 * # Safety
 * `handle` must be a live handle and `dir` a NUL-terminated string.
 */
enum CfucbStatus cfucb_experiment_write_outputs(const struct CfucbExperiment *handle,
                                                const char *dir);

/**
 * # Safety
 * `s` must come from this library, or be null.
 */
void cfucb_string_free(char *s);

/**
 * Lower branch of the Lambert W function on `[-1/e, 0)`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CfucbStatus cfucb_lambert_w_minus1(double x, double *out);

/**
 * `q(x) = -B W_{-1}(-(1/B)(x/d)^{-C/B})`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CfucbStatus cfucb_q_function(double x, double b, double c, size_t d, double *out);

/**
 * Opted-in population size that makes every arm optimal for at least `d`
 * users with probability `1 - eps`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CfucbStatus cfucb_theorem1_threshold(size_t n_arms, size_t d, double eps, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CFUCB_H */
