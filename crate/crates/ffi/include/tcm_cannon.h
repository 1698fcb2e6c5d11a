#ifndef TCM_CANNON_H
#define TCM_CANNON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Photon-ladder convention for the coupling matrix elements.
 */
typedef enum TcmPhotonFactors {
  /**
   * `g_i · sqrt(p + 1)`.
   */
  TCM_PHOTON_FACTORS_BOSONIC = 0,
  /**
   * Bare `g_i`.
   */
  TCM_PHOTON_FACTORS_UNIT = 1,
} TcmPhotonFactors;

/**
 * Result of every fallible call.
 */
typedef enum TcmStatus {
  TCM_STATUS_OK = 0,
  TCM_STATUS_NULL_POINTER = 1,
  TCM_STATUS_INVALID_ARGUMENT = 2,
  TCM_STATUS_DIMENSION_MISMATCH = 3,
  TCM_STATUS_OUT_OF_RANGE = 4,
  TCM_STATUS_WORKERS_UNAVAILABLE = 5,
  TCM_STATUS_WORKER_FAILURE = 6,
  TCM_STATUS_TRACE_DRIFT = 7,
  TCM_STATUS_NUMERICAL = 8,
  TCM_STATUS_PANIC = 9,
} TcmStatus;

/**
 * Square complex matrix.
 */
typedef struct TcmMatrix TcmMatrix;

/**
 * Model parameters.
 */
typedef struct TcmModel TcmModel;

/**
 * Recorded observables of one trajectory.
 */
typedef struct TcmTrajectory TcmTrajectory;

/**
 * Evolution settings; obtain defaults from [`tcm_evolution_config_default`].
 */
typedef struct TcmEvolutionConfig {
  double dt;
  size_t steps;
  size_t taylor_order;
  /**
   * Cannon grid side `q` (q×q workers); 0 runs serially.
   */
  size_t grid_side;
  bool renormalize_trace;
  size_t stride;
} TcmEvolutionConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *tcm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tcm_version(void);

/**
 * Creates a model of `n` atoms. `couplings` holds `couplings_len == n`
 * values.
 *
 * # Safety
 * `couplings` must point to `couplings_len` readable doubles; `out` must be
 * writable.
 */
enum TcmStatus tcm_model_new(uint32_t n,
                             double hbar,
                             double omega,
                             const double *couplings,
                             size_t couplings_len,
                             enum TcmPhotonFactors photon_factors,
                             struct TcmModel **out);

/**
 * Hilbert-space dimension `2^n`, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t tcm_model_dimension(const struct TcmModel *model);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void tcm_model_free(struct TcmModel *model);

/**
 * Builds the model Hamiltonian.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TcmStatus tcm_hamiltonian(const struct TcmModel *model, struct TcmMatrix **out);

/**
 * Copies a `dim`×`dim` matrix from row-major real and imaginary parts.
 * `imag` may be null for a real matrix.
 *
 * # Safety
 * `real` (and `imag` if non-null) must point to `dim * dim` readable doubles.
 */
enum TcmStatus tcm_matrix_from_parts(size_t dim,
                                     const double *real,
                                     const double *imag,
                                     struct TcmMatrix **out);

/**
 * Matrix dimension, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t tcm_matrix_dim(const struct TcmMatrix *m);

/**
 * Reads entry `(row, col)`.
 *
 * # Safety
 * `m` must be a live handle; `real` and `imag` writable.
 */
enum TcmStatus tcm_matrix_get(const struct TcmMatrix *m,
                              size_t row,
                              size_t col,
                              double *real,
                              double *imag);

/**
 * Copies all entries out in row-major order; `len` must be `dim * dim`.
 *
 * # Safety
 * `real` and `imag` must each point to `len` writable doubles.
 */
enum TcmStatus tcm_matrix_copy_parts(const struct TcmMatrix *m,
                                     double *real,
                                     double *imag,
                                     size_t len);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void tcm_matrix_free(struct TcmMatrix *m);

/**
 * `a · b` on a `grid_side`×`grid_side` worker grid (0 for serial).
 *
 * # Safety
 * `a`, `b` must be live handles; `out` writable.
 */
enum TcmStatus tcm_cannon_multiply(const struct TcmMatrix *a,
                                   const struct TcmMatrix *b,
                                   size_t grid_side,
                                   struct TcmMatrix **out);

/**
 * Default evolution settings.
 */
struct TcmEvolutionConfig tcm_evolution_config_default(void);

/**
 * Evolves the all-excited state of `model` under `config`.
 *
 * # Safety
 * `model` and `config` must be valid pointers; `out` writable.
 */
enum TcmStatus tcm_simulate(const struct TcmModel *model,
                            const struct TcmEvolutionConfig *config,
                            struct TcmTrajectory **out);

/**
 * Number of recorded time points, or 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t tcm_trajectory_len(const struct TcmTrajectory *t);

/**
 * Number of photon sectors `n + 1`, or 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t tcm_trajectory_sectors(const struct TcmTrajectory *t);

/**
 * Time of record `index`.
 *
 * # Safety
 * `t` must be a live handle; `out` writable.
 */
enum TcmStatus tcm_trajectory_time(const struct TcmTrajectory *t, size_t index, double *out);

/**
 * Population of the `sector`-photon sector at record `index`.
 *
 * # Safety
 * `t` must be a live handle; `out` writable.
 */
enum TcmStatus tcm_trajectory_probability(const struct TcmTrajectory *t,
                                          size_t index,
                                          size_t sector,
                                          double *out);

/**
 * Trace of the density matrix at record `index`.
 *
 * # Safety
 * `t` must be a live handle; `out` writable.
 */
enum TcmStatus tcm_trajectory_trace(const struct TcmTrajectory *t, size_t index, double *out);

/**
 * # Safety
 * `t` must be null or a handle not yet freed.
 */
void tcm_trajectory_free(struct TcmTrajectory *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TCM_CANNON_H */
