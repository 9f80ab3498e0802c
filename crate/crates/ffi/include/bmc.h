#ifndef BMC_H
#define BMC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BmcStatus {
  BMC_STATUS_OK = 0,
  BMC_STATUS_NULL_POINTER = 1,
  // Bad shape, size, parameter or non-finite input.
  BMC_STATUS_INVALID_ARGUMENT = 2,
  // Bounds are infeasible (a lower bound above its upper bound, etc.).
  BMC_STATUS_CONSTRAINT = 3,
  BMC_STATUS_DIVERGENCE = 4,
  BMC_STATUS_NUMERIC = 5,
  // Output buffer shorter than the value being copied out.
  BMC_STATUS_BUFFER_TOO_SMALL = 6,
  BMC_STATUS_IO = 7,
  BMC_STATUS_PANIC = 8,
} BmcStatus;

typedef enum BmcBoundUpdate {
  BMC_BOUND_UPDATE_PROJECTED = 0,
  BMC_BOUND_UPDATE_LINEARIZED = 1,
} BmcBoundUpdate;

// Opaque bounded problem.
typedef struct BmcProblem BmcProblem;

// Opaque solver result.
typedef struct BmcRecovery BmcRecovery;

// Plain-data mirror of the solver configuration.
typedef struct BmcSolverConfig {
  double rho_zeta_init;
  double rho_eta_init;
  double rho_growth;
  size_t max_iters;
  // 0 runs all `max_iters` iterations.
  double rel_residual_tol;
  double init_mix;
  size_t record_every;
  // A `BmcBoundUpdate` value. Kept as a plain integer so that an
  // out-of-range value from C is an error rather than undefined behavior.
  uint32_t bound_update;
} BmcSolverConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *bmc_version(void);

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *bmc_last_error_message(void);

struct BmcSolverConfig bmc_solver_config_default(void);

// Builds a problem from explicit `n x n` row-major bound matrices. Use a
// value `>= 1e18` (or `+inf`) for "no upper bound".
//
// # Safety
// `lower` and `upper` must each point to `n * n` doubles; `out` must be a
// valid pointer.
enum BmcStatus bmc_problem_from_bounds(const double *lower,
                                       const double *upper,
                                       size_t n,
                                       size_t r,
                                       struct BmcProblem **out);

// Builds bounds `alpha_l * d2` and `alpha_u * d2` from the squared
// distances of an `n x dim` row-major point cloud.
//
// # Safety
// `coords` must point to `n * dim` doubles; `out` must be a valid pointer.
enum BmcStatus bmc_problem_from_points(const double *coords,
                                       size_t n,
                                       size_t dim,
                                       double alpha_l,
                                       double alpha_u,
                                       size_t r,
                                       struct BmcProblem **out);

// Point count of a problem; 0 for NULL.
//
// # Safety
// `problem` must be NULL or a live handle.
size_t bmc_problem_n(const struct BmcProblem *problem);

// # Safety
// `problem` must be NULL or a handle not yet freed.
void bmc_problem_free(struct BmcProblem *problem);

// Runs the solver. A NULL `config` uses the defaults.
//
// # Safety
// `problem` must be a live handle, `config` NULL or valid, `out` valid.
enum BmcStatus bmc_solve(const struct BmcProblem *problem,
                         const struct BmcSolverConfig *config,
                         struct BmcRecovery **out);

// Point count of a recovery; 0 for NULL.
//
// # Safety
// `rec` must be NULL or a live handle.
size_t bmc_recovery_n(const struct BmcRecovery *rec);

// # Safety
// `rec` must be NULL or a live handle.
size_t bmc_recovery_iters_run(const struct BmcRecovery *rec);

// Copies the recovered `n x n` squared-distance matrix, row-major.
//
// # Safety
// `rec` must be a live handle and `out` must hold `len` doubles.
enum BmcStatus bmc_recovery_distances(const struct BmcRecovery *rec, double *out, size_t len);

// Copies the `n` descending Gram eigenvalues of the recovered matrix.
//
// # Safety
// `rec` must be a live handle and `out` must hold `len` doubles.
enum BmcStatus bmc_recovery_spectrum(const struct BmcRecovery *rec, double *out, size_t len);

// Copies the `n` descending singular values of the recovered matrix.
//
// # Safety
// `rec` must be a live handle and `out` must hold `len` doubles.
enum BmcStatus bmc_recovery_singular_values(const struct BmcRecovery *rec, double *out, size_t len);

// Residuals of the last recorded iteration.
//
// # Safety
// `rec` must be a live handle; the output pointers must be valid.
enum BmcStatus bmc_recovery_final_residual(const struct BmcRecovery *rec,
                                           double *primal_residual,
                                           double *max_violation);

// Writes the `n x p` embedding of the recovered matrix, row-major.
//
// # Safety
// `rec` must be a live handle and `out` must hold `len` doubles.
enum BmcStatus bmc_embed(const struct BmcRecovery *rec, size_t p, double *out, size_t len);

// # Safety
// `rec` must be NULL or a handle not yet freed.
void bmc_recovery_free(struct BmcRecovery *rec);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BMC_H */
