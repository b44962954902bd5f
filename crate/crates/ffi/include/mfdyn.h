#ifndef MFDYN_H
#define MFDYN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum MfdynStatus {
  MFDYN_STATUS_OK = 0,
  MFDYN_STATUS_NULL_POINTER = 1,
  MFDYN_STATUS_INVALID_ARGUMENT = 2,
  MFDYN_STATUS_PARSE = 3,
  MFDYN_STATUS_NUMERICAL = 4,
  MFDYN_STATUS_NOT_CONVERGED = 5,
  MFDYN_STATUS_BUFFER_TOO_SMALL = 6,
  MFDYN_STATUS_PANIC = 7,
} MfdynStatus;

typedef enum MfdynConnectivity {
  MFDYN_CONNECTIVITY_CONNECTED = 0,
  MFDYN_CONNECTIVITY_DISCONNECTED_COMPLETE_BIPARTITE = 1,
  MFDYN_CONNECTIVITY_DISCONNECTED = 2,
} MfdynConnectivity;

/**
 * Opaque partially observed square matrix.
 */
typedef struct MfdynMatrix MfdynMatrix;

/**
 * Opaque result of a finished training run.
 */
typedef struct MfdynTrainResult MfdynTrainResult;

/**
 * Training options. Zero or negative `learning_rate`, and zero
 * `max_steps`, select the instance-scaled defaults.
 */
typedef struct MfdynTrainOptions {
  double init_variance;
  double learning_rate;
  uint64_t max_steps;
  uint64_t seed;
} MfdynTrainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *mfdyn_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mfdyn_version(void);

/**
 * Parses the text matrix format (`*` marks a missing entry) or JSON.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum MfdynStatus mfdyn_matrix_parse(const char *text, struct MfdynMatrix **out);

/**
 * Builds a `d x d` matrix from row-major `values` and a row-major 0/1 `mask`.
 *
 * # Safety
 * `values` and `mask` must each point to `d * d` elements.
 */
enum MfdynStatus mfdyn_matrix_new(size_t d,
                                  const double *values,
                                  const uint8_t *mask,
                                  struct MfdynMatrix **out);

/**
 * # Safety
 * `m` must be null or a handle from this library not yet freed.
 */
void mfdyn_matrix_free(struct MfdynMatrix *m);

/**
 * Dimension `d`, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t mfdyn_matrix_dim(const struct MfdynMatrix *m);

/**
 * Number of observed entries, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t mfdyn_matrix_observed_count(const struct MfdynMatrix *m);

/**
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum MfdynStatus mfdyn_connectivity(const struct MfdynMatrix *m, enum MfdynConnectivity *out);

/**
 * Minimum nuclear norm over completions. Uses the closed form when every
 * component is complete bipartite and the convex solver otherwise.
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum MfdynStatus mfdyn_min_nuclear_norm(const struct MfdynMatrix *m, double *out);

/**
 * Smallest rank found by a restarted alternating least-squares search.
 * This is an upper bound on the minimum completion rank.
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum MfdynStatus mfdyn_min_rank(const struct MfdynMatrix *m, size_t restarts, size_t *out);

/**
 * Default options: variance 1e-8, instance-scaled step size and step budget, seed 0.
 */
struct MfdynTrainOptions mfdyn_train_options_default(void);

/**
 * Trains `W = AB` by gradient descent from a small Gaussian initialization.
 *
 * # Safety
 * `m` must be a live handle, `opts` null or valid, and `out` a valid pointer.
 */
enum MfdynStatus mfdyn_train(const struct MfdynMatrix *m,
                             const struct MfdynTrainOptions *opts,
                             struct MfdynTrainResult **out);

/**
 * # Safety
 * `r` must be null or a handle from [`mfdyn_train`] not yet freed.
 */
void mfdyn_train_result_free(struct MfdynTrainResult *r);

/**
 * Copies the learned `W` (row-major, `d * d` values) into `buf`.
 *
 * # Safety
 * `r` must be a live handle and `buf` must hold `len` values.
 */
enum MfdynStatus mfdyn_train_result_output(const struct MfdynTrainResult *r,
                                           double *buf,
                                           size_t len);

/**
 * Copies the `d` singular values of `W` (isolated rows and columns
 * removed), in descending order, into `buf`.
 *
 * # Safety
 * `r` must be a live handle and `buf` must hold `len` values.
 */
enum MfdynStatus mfdyn_train_result_singular_values(const struct MfdynTrainResult *r,
                                                    double *buf,
                                                    size_t len);

/**
 * Dimension of the result, or 0 for a null handle.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
size_t mfdyn_train_result_dim(const struct MfdynTrainResult *r);

/**
 * Final empirical risk, or NaN for a null handle.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
double mfdyn_train_result_loss(const struct MfdynTrainResult *r);

/**
 * Number of gradient steps taken, or 0 for a null handle.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
size_t mfdyn_train_result_steps(const struct MfdynTrainResult *r);

/**
 * 1 if the loss reached its tolerance, 0 otherwise or for a null handle.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
int mfdyn_train_result_converged(const struct MfdynTrainResult *r);

/**
 * Numerical rank of the learned `W`, or 0 for a null handle.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
size_t mfdyn_train_result_rank(const struct MfdynTrainResult *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MFDYN_H */
