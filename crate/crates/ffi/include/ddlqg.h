#ifndef DDLQG_H
#define DDLQG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DdlqgStatus {
  DDLQG_STATUS_OK = 0,
  DDLQG_STATUS_NULL_POINTER = 1,
  DDLQG_STATUS_SHAPE = 2,
  DDLQG_STATUS_INVALID_COVARIANCE = 3,
  DDLQG_STATUS_INVALID_SPEC = 4,
  DDLQG_STATUS_INSUFFICIENT_EXCITATION = 5,
  DDLQG_STATUS_ILL_POSED_COST = 6,
  DDLQG_STATUS_INFEASIBLE_INITIAL_STATE = 7,
  DDLQG_STATUS_DEGENERATE_TRAJECTORY = 8,
  DDLQG_STATUS_INSUFFICIENT_DATA = 9,
  DDLQG_STATUS_RICCATI_DIVERGENCE = 10,
  DDLQG_STATUS_ASSUMPTION_VIOLATION = 11,
  DDLQG_STATUS_DEGENERATE_REALIZATION = 12,
  DDLQG_STATUS_INSTABILITY = 13,
  DDLQG_STATUS_TOO_FEW_EPISODES = 14,
  DDLQG_STATUS_WINDOW_RANK_DEFICIENT = 15,
  DDLQG_STATUS_OTHER = 16,
  DDLQG_STATUS_PANIC = 17,
} DdlqgStatus;

/**
 * Open-loop trajectory data.
 */
typedef struct DdlqgDataset DdlqgDataset;

/**
 * Data-driven bank of filter gains.
 */
typedef struct DdlqgFilterBank DdlqgFilterBank;

/**
 * Plant and noise model.
 */
typedef struct DdlqgSystem DdlqgSystem;

/**
 * Quadratic cost weights.
 */
typedef struct DdlqgWeights DdlqgWeights;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call into the library on the same thread.
 */
const char *ddlqg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ddlqg_version(void);

/**
 * Builds a plant from `A` (n x n), `B` (n x m), `C` (p x n), `Q_w` (n x n), `R_v` (p x p)
 * and the initial-state covariance `Sigma0` (n x n).
 *
 * # Safety
 * Every matrix pointer must reference the stated number of doubles and `out` must be writable.
 */
enum DdlqgStatus ddlqg_system_new(size_t n,
                                  size_t m,
                                  size_t p,
                                  const double *a,
                                  const double *b,
                                  const double *c,
                                  const double *q_w,
                                  const double *r_v,
                                  const double *sigma0,
                                  struct DdlqgSystem **out);

/**
 * # Safety
 * `system` must be NULL or a handle from [`ddlqg_system_new`] that was not freed.
 */
void ddlqg_system_free(struct DdlqgSystem *system);

/**
 * Writes the state, input and output dimensions of `system`.
 *
 * # Safety
 * `system` must be a live handle; each output pointer must be NULL or writable.
 */
enum DdlqgStatus ddlqg_system_dims(const struct DdlqgSystem *system,
                                   size_t *n,
                                   size_t *m,
                                   size_t *p);

/**
 * Cost weights `Q_x` (n x n, positive semidefinite) and `R_u` (m x m, positive definite).
 *
 * # Safety
 * `q_x` and `r_u` must reference `n*n` and `m*m` doubles; `out` must be writable.
 */
enum DdlqgStatus ddlqg_weights_new(size_t n,
                                   size_t m,
                                   const double *q_x,
                                   const double *r_u,
                                   struct DdlqgWeights **out);

/**
 * # Safety
 * `weights` must be NULL or a live handle from [`ddlqg_weights_new`].
 */
void ddlqg_weights_free(struct DdlqgWeights *weights);

/**
 * Simulates `trajectories` open-loop runs of length `horizon` with Gaussian excitation of
 * covariance `sigma_u` (m x m). Identical arguments give identical data.
 *
 * # Safety
 * `system` must be live, `sigma_u` must reference `m*m` doubles and `out` must be writable.
 */
enum DdlqgStatus ddlqg_dataset_simulate(const struct DdlqgSystem *system,
                                        const double *sigma_u,
                                        size_t horizon,
                                        size_t trajectories,
                                        uint64_t seed,
                                        struct DdlqgDataset **out);

/**
 * Wraps recorded data. Trajectory `i` of `count` holds `u` (`m*horizon` values),
 * `x` (`n*(horizon+1)`) and `y` (`p*(horizon+1)`) starting at offset `i` times that length.
 *
 * # Safety
 * `u`, `x` and `y` must reference `count` blocks of the stated sizes; `out` must be writable.
 */
enum DdlqgStatus ddlqg_dataset_from_data(size_t n,
                                         size_t m,
                                         size_t p,
                                         size_t horizon,
                                         size_t count,
                                         const double *u,
                                         const double *x,
                                         const double *y,
                                         struct DdlqgDataset **out);

/**
 * Writes the horizon and the number of trajectories.
 *
 * # Safety
 * `dataset` must be live; each output pointer must be NULL or writable.
 */
enum DdlqgStatus ddlqg_dataset_shape(const struct DdlqgDataset *dataset,
                                     size_t *horizon,
                                     size_t *count);

/**
 * Copies the trajectory-major outputs of the dataset into `y`, which must hold
 * `p*(horizon+1)*count` doubles.
 *
 * # Safety
 * `dataset` must be live and `y` must be writable for the full length.
 */
enum DdlqgStatus ddlqg_dataset_outputs(const struct DdlqgDataset *dataset, double *y);

/**
 * # Safety
 * `dataset` must be NULL or a live dataset handle.
 */
void ddlqg_dataset_free(struct DdlqgDataset *dataset);

/**
 * Model-based LQR gain `K` (m x n, row-major) with the convention `u = K x`.
 *
 * # Safety
 * Handles must be live and `k` must hold `m*n` doubles.
 */
enum DdlqgStatus ddlqg_lqr_oracle(const struct DdlqgSystem *system,
                                  const struct DdlqgWeights *weights,
                                  double *k);

/**
 * LQR gain estimated from trajectory data alone (m x n, row-major).
 *
 * # Safety
 * Handles must be live and `k` must hold `m*n` doubles.
 */
enum DdlqgStatus ddlqg_lqr_from_data(const struct DdlqgDataset *dataset,
                                     const struct DdlqgWeights *weights,
                                     double *k);

/**
 * Fits one filter gain per time step `0..=horizon` from output and input data.
 *
 * # Safety
 * `dataset` must be live and `out` must be writable.
 */
enum DdlqgStatus ddlqg_filter_bank_new(const struct DdlqgDataset *dataset,
                                       struct DdlqgFilterBank **out);

/**
 * Last time index with a gain, or 0 for a NULL handle.
 *
 * # Safety
 * `bank` must be NULL or live.
 */
size_t ddlqg_filter_bank_horizon(const struct DdlqgFilterBank *bank);

/**
 * State estimate at time `t` from inputs `u(0..t-1)` (`m*t` values) and outputs
 * `y(0..t)` (`p*(t+1)` values), both time-major. Writes `n` doubles to `x_hat`.
 *
 * # Safety
 * `bank` must be live and the buffers must have the stated lengths.
 */
enum DdlqgStatus ddlqg_filter_bank_estimate(const struct DdlqgFilterBank *bank,
                                            size_t t,
                                            const double *u_hist,
                                            size_t u_len,
                                            const double *y_hist,
                                            size_t y_len,
                                            double *x_hat);

/**
 * # Safety
 * `bank` must be NULL or a live filter-bank handle.
 */
void ddlqg_filter_bank_free(struct DdlqgFilterBank *bank);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDLQG_H */
