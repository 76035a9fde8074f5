/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef TOPOPRIV_H
#define TOPOPRIV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TpStatus {
  TP_STATUS_OK = 0,
  TP_STATUS_NULL_POINTER = 1,
  /**
   * Bad input or configuration.
   */
  TP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The requested design does not exist for this network.
   */
  TP_STATUS_INFEASIBLE = 3,
  TP_STATUS_NUMERICAL_FAILURE = 4,
  /**
   * Output buffer length does not match the result.
   */
  TP_STATUS_BUFFER_SIZE = 5,
  TP_STATUS_PANIC = 6,
} TpStatus;

/**
 * Opaque feedback-matrix handle.
 */
typedef struct TpFeedback TpFeedback;

/**
 * Opaque network handle.
 */
typedef struct TpTopology TpTopology;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *tp_last_error_message(void);

/**
 * Builds a network from an `n x n` row-stochastic weight matrix.
 *
 * # Safety
 * `weights` must point to `n * n` doubles and `out` to writable storage.
 */
enum TpStatus tp_topology_new(const double *weights, size_t n, struct TpTopology **out);

/**
 * Seeded random strongly connected, aperiodic network.
 *
 * # Safety
 * `out` must point to writable storage.
 */
enum TpStatus tp_topology_random(size_t n, double density, uint64_t seed, struct TpTopology **out);

/**
 * # Safety
 * `t` must be NULL or a handle from `tp_topology_new`/`tp_topology_random`
 * that has not been freed.
 */
void tp_topology_free(struct TpTopology *t);

/**
 * Node count, 0 for NULL.
 *
 * # Safety
 * `t` must be NULL or a live handle.
 */
size_t tp_topology_n(const struct TpTopology *t);

/**
 * Stationary distribution `pi` (`pi^T W = pi^T`, `sum pi = 1`).
 *
 * # Safety
 * `t` must be a live handle and `out` must point to `len` doubles.
 */
enum TpStatus tp_topology_stationary(const struct TpTopology *t, double *out, size_t len);

/**
 * `K = -alpha (I - W)`; pass a NaN `alpha` for the default step.
 *
 * # Safety
 * `t` must be a live handle and `out` must point to writable storage.
 */
enum TpStatus tp_design_laplacian(const struct TpTopology *t,
                                  double alpha,
                                  struct TpFeedback **out);

/**
 * Kernel-space design (`K 1 = 0`, `pi^T K = 0` on the support of `W`).
 *
 * # Safety
 * `t` must be a live handle and `out` must point to writable storage.
 */
enum TpStatus tp_design_kernel_pb(const struct TpTopology *t,
                                  uint64_t seed,
                                  struct TpFeedback **out);

/**
 * Design making `(W + K, C)` unobservable; `c` is `m x n` row-major.
 *
 * # Safety
 * `t` must be a live handle, `c` must point to `m * n` doubles and `out`
 * to writable storage.
 */
enum TpStatus tp_design_unobservable(const struct TpTopology *t,
                                     const double *c,
                                     size_t m,
                                     uint64_t seed,
                                     struct TpFeedback **out);

/**
 * Eigenmode-removal design.
 *
 * # Safety
 * `t` must be a live handle and `out` must point to writable storage.
 */
enum TpStatus tp_design_invariant_subspace(const struct TpTopology *t, struct TpFeedback **out);

/**
 * Distributed budgeted protocol with per-row budget `tau`; `x0` holds `n`
 * initial states and `seed` drives the beacon draws.
 *
 * # Safety
 * `t` must be a live handle, `x0` must point to `n` doubles and `out` to
 * writable storage.
 */
enum TpStatus tp_design_distributed(const struct TpTopology *t,
                                    const double *x0,
                                    double tau,
                                    uint64_t seed,
                                    struct TpFeedback **out);

/**
 * # Safety
 * `fb` must be NULL or a live feedback handle.
 */
void tp_feedback_free(struct TpFeedback *fb);

/**
 * Copies `K` (`n x n`, row-major).
 *
 * # Safety
 * `fb` must be a live handle and `out` must point to `len` doubles.
 */
enum TpStatus tp_feedback_matrix(const struct TpFeedback *fb, double *out, size_t len);

/**
 * 1 when every convergence condition holds for `W + K`, 0 otherwise or
 * for NULL.
 *
 * # Safety
 * `fb` must be NULL or a live handle.
 */
int32_t tp_feedback_verified(const struct TpFeedback *fb);

/**
 * Feedback as JSON; release with [`tp_string_free`]. NULL on failure.
 *
 * # Safety
 * `fb` must be NULL or a live handle.
 */
char *tp_feedback_to_json(const struct TpFeedback *fb);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void tp_string_free(char *s);

/**
 * Simulates `x_{t+1} = (W + K) x_t` (`K` may be NULL) and writes
 * `x_0..x_T` as `(horizon + 1) x n` row-major.
 *
 * # Safety
 * `t` must be a live handle, `fb` NULL or live, `x0` must point to `n`
 * doubles and `out` to `len` doubles.
 */
enum TpStatus tp_simulate(const struct TpTopology *t,
                          const struct TpFeedback *fb,
                          const double *x0,
                          size_t horizon,
                          double *out,
                          size_t len);

/**
 * Least-squares estimate of the interaction matrix from `count` states
 * (`count x n` row-major, consecutive in time), written `n x n`
 * row-major.
 *
 * # Safety
 * `states` must point to `count * n` doubles and `out` to `len` doubles.
 */
enum TpStatus tp_ols_estimate(const double *states,
                              size_t n,
                              size_t count,
                              double *out,
                              size_t len);

/**
 * Normalised errors of an estimate against the truth (both `n x n`
 * row-major): `er1` over all entries, `er2` over off-diagonal entries
 * after the best positive rescaling `gamma`.
 *
 * # Safety
 * `estimate` and `truth` must point to `n * n` doubles; the result
 * pointers must be writable.
 */
enum TpStatus tp_inference_errors(const double *estimate,
                                  const double *truth,
                                  size_t n,
                                  double *er1,
                                  double *er2,
                                  double *gamma);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOPOPRIV_H */
