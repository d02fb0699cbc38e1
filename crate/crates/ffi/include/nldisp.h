#ifndef NLDISP_H
#define NLDISP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>
#include <stddef.h>

typedef enum NldispStatus {
  NLDISP_STATUS_OK = 0,
  NLDISP_STATUS_NULL_POINTER = 1,
  NLDISP_STATUS_INVALID_ARGUMENT = 2,
  NLDISP_STATUS_CONFIG = 3,
  NLDISP_STATUS_BUFFER_TOO_SMALL = 4,
  NLDISP_STATUS_HYPOTHESIS_VIOLATION = 5,
  NLDISP_STATUS_SOLVER_FAILURE = 6,
  NLDISP_STATUS_NO_BRANCH = 7,
  NLDISP_STATUS_IO = 8,
  NLDISP_STATUS_PANIC = 9,
} NldispStatus;

// Opaque model handle.
typedef struct NldispModel NldispModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *nldisp_last_error(void);

// Builds a model from a NUL-terminated JSON configuration. Relative
// tabulated paths resolve against the working directory.
//
// # Safety
// `json` must be a valid C string and `out` a valid pointer.
enum NldispStatus nldisp_model_new(const char *json, struct NldispModel **out);

// # Safety
// `model` must come from [`nldisp_model_new`] and not be used afterwards.
void nldisp_model_free(struct NldispModel *model);

// # Safety
// Pointers must be valid.
enum NldispStatus nldisp_model_node_count(const struct NldispModel *model, size_t *out);

// Spatial dimension of the grid.
//
// # Safety
// Pointers must be valid.
enum NldispStatus nldisp_model_dim(const struct NldispModel *model, size_t *out);

// Copies node coordinates, row-major with `dim` entries per node.
//
// # Safety
// `buf` must hold `len` doubles.
enum NldispStatus nldisp_model_nodes(const struct NldispModel *model, double *buf, size_t len);

// # Safety
// Pointers must be valid.
enum NldispStatus nldisp_model_lambda1(const struct NldispModel *model, double *out);

// Copies the sup-normalized principal eigenfunction.
//
// # Safety
// `buf` must hold `len` doubles.
enum NldispStatus nldisp_model_phi1(const struct NldispModel *model, double *buf, size_t len);

// Traces the positive branch up to `lambda_max` (the configured value when
// not finite) and stores it on the model.
//
// # Safety
// Pointers must be valid; `point_count` may be null.
enum NldispStatus nldisp_model_trace(struct NldispModel *model,
                                     double lambda_max,
                                     size_t *point_count);

// Reads point `index` of the stored branch. `u` may be null to skip the state.
//
// # Safety
// Pointers must be valid; `u` must hold `len` doubles when not null.
enum NldispStatus nldisp_model_branch_point(const struct NldispModel *model,
                                            size_t index,
                                            double *lambda,
                                            double *sup_norm,
                                            double *u,
                                            size_t len);

// Positive solution at `lambda`, interpolated from the stored branch and
// corrected by Newton; traces to `lambda` first when no branch covers it.
//
// # Safety
// `u` must hold `len` doubles.
enum NldispStatus nldisp_model_solve(struct NldispModel *model,
                                     double lambda,
                                     double *u,
                                     size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NLDISP_H */
