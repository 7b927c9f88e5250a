#ifndef FEDSUPLINUCB_H
#define FEDSUPLINUCB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FslStatus {
  FSL_STATUS_OK = 0,
  FSL_STATUS_NULL_POINTER = 1,
  FSL_STATUS_INVALID_ARGUMENT = 2,
  FSL_STATUS_DIMENSION_MISMATCH = 3,
  FSL_STATUS_INVALID_CONFIG = 4,
  FSL_STATUS_ENVIRONMENT = 5,
  FSL_STATUS_IO = 6,
  FSL_STATUS_PARSE = 7,
  FSL_STATUS_PANIC = 8,
} FslStatus;

/**
 * Ridge statistics `(A, b)` with cached inverse and log-determinant.
 */
typedef struct FslRidge FslRidge;

/**
 * A finished simulation run.
 */
typedef struct FslSimulation FslSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread. Valid until the next failing
 * call on the same thread; empty if nothing failed yet.
 */
const char *fsl_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fsl_version(void);

/**
 * Creates `λI` statistics of dimension `dim`.
 *
 * # Safety
 * `out_handle` must be valid for writes.
 */
enum FslStatus fsl_ridge_new(uintptr_t dim, double lambda, struct FslRidge **out_handle);

/**
 * # Safety
 * `handle` must come from [`fsl_ridge_new`] and not be used afterwards.
 */
void fsl_ridge_free(struct FslRidge *handle);

/**
 * Adds `w·xxᵀ` to `A` and `w·r·x` to `b`.
 *
 * # Safety
 * `x` must point to `len` readable doubles.
 */
enum FslStatus fsl_ridge_update(struct FslRidge *handle,
                                const double *x,
                                uintptr_t len,
                                double reward,
                                double weight);

/**
 * Writes `‖x‖_{A⁻¹}` to `out_norm`.
 *
 * # Safety
 * `x` must point to `len` readable doubles and `out_norm` be writable.
 */
enum FslStatus fsl_ridge_weighted_norm(const struct FslRidge *handle,
                                       const double *x,
                                       uintptr_t len,
                                       double *out_norm);

/**
 * # Safety
 * `out_value` must be writable.
 */
enum FslStatus fsl_ridge_log_det(const struct FslRidge *handle, double *out_value);

/**
 * Writes `θ̂ = A⁻¹b` into `out_theta`, which must hold exactly `dim` values.
 *
 * # Safety
 * `out_theta` must point to `len` writable doubles.
 */
enum FslStatus fsl_ridge_theta(const struct FslRidge *handle, double *out_theta, uintptr_t len);

/**
 * Runs the simulation described by a JSON run request, the same object the
 * CLI echoes in its summaries.
 *
 * # Safety
 * `request_json` must be a NUL-terminated string and `out_handle` writable.
 */
enum FslStatus fsl_simulation_run(const char *request_json, struct FslSimulation **out_handle);

/**
 * # Safety
 * `handle` must come from [`fsl_simulation_run`] and not be used afterwards.
 */
void fsl_simulation_free(struct FslSimulation *handle);

/**
 * Number of arm pulls in the run.
 *
 * # Safety
 * `out_pulls` must be writable.
 */
enum FslStatus fsl_simulation_pulls(const struct FslSimulation *handle, uint64_t *out_pulls);

/**
 * # Safety
 * `out_regret` must be writable.
 */
enum FslStatus fsl_simulation_final_regret(const struct FslSimulation *handle, double *out_regret);

/**
 * Synchronization batches and client exchanges.
 *
 * # Safety
 * Both output pointers must be writable.
 */
enum FslStatus fsl_simulation_comm(const struct FslSimulation *handle,
                                   uint64_t *out_batches,
                                   uint64_t *out_exchanges);

/**
 * Writes the per-pull CSV log.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum FslStatus fsl_simulation_write_csv(const struct FslSimulation *handle, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDSUPLINUCB_H */
