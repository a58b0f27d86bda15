#ifndef PREFORM_FUSION_H
#define PREFORM_FUSION_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of temperature values in one predicted or simulated field.
 */
#define PF_N_POINTS 32

typedef enum PfStatus {
  PF_STATUS_OK = 0,
  PF_STATUS_NULL_POINTER = 1,
  PF_STATUS_INVALID_ARGUMENT = 2,
  PF_STATUS_DIMENSION_MISMATCH = 3,
  PF_STATUS_IO = 4,
  PF_STATUS_FORMAT = 5,
  PF_STATUS_UNSTABLE = 6,
  PF_STATUS_INTERNAL = 7,
} PfStatus;

/**
 * A loaded model checkpoint.
 */
typedef struct PfModel PfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or null if the
 * last call succeeded. The pointer stays valid until the next call into this
 * library from the same thread.
 */
const char *pf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pf_version(void);

/**
 * Loads a checkpoint file. On success `*out` receives a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PfStatus pf_model_load(const char *path, struct PfModel **out);

/**
 * Releases a handle from [`pf_model_load`]. Null is ignored.
 *
 * # Safety
 * `model` must come from [`pf_model_load`] and not be used afterwards.
 */
void pf_model_free(struct PfModel *model);

/**
 * Number of input features the model expects.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum PfStatus pf_model_input_dim(const struct PfModel *model, size_t *out);

/**
 * Writes the name of input feature `index` into `buf` (NUL-terminated,
 * truncated to `buf_len`). `*needed` receives the full length including the NUL.
 *
 * # Safety
 * `model` must be a live handle; `buf` must hold `buf_len` bytes; `needed` may be null.
 */
enum PfStatus pf_model_input_name(const struct PfModel *model,
                                  size_t index,
                                  char *buf,
                                  size_t buf_len,
                                  size_t *needed);

/**
 * Predicts `rows` temperature fields. `inputs` is row-major `rows × input_dim`
 * and `out` receives `rows × PF_N_POINTS` values in °C.
 *
 * # Safety
 * The buffers must hold the stated number of elements.
 */
enum PfStatus pf_model_predict(const struct PfModel *model,
                               const double *inputs,
                               size_t inputs_len,
                               size_t rows,
                               double *out,
                               size_t out_len);

/**
 * Runs the heating simulator with default settings for a built-in variant
 * (`low_cp`, `mid_cp`, `high_cp`, `unseen_cp`, `small`, `medium`, `large`,
 * `unseen_geometry`). `positions` are slab positions in mm; `out` receives
 * `PF_N_POINTS` temperatures.
 *
 * # Safety
 * `variant` must be NUL-terminated; the buffers must hold the stated lengths.
 */
enum PfStatus pf_simulate(const char *variant,
                          const double *positions,
                          size_t n_positions,
                          double *out,
                          size_t out_len);

/**
 * Draws an `n_points × n_dims` Latin Hypercube design (row-major into `out`)
 * over the box `[lower[j], upper[j]]`.
 *
 * # Safety
 * `lower` and `upper` must hold `n_dims` values and `out` `out_len` values.
 */
enum PfStatus pf_lhs(size_t n_dims,
                     const double *lower,
                     const double *upper,
                     size_t n_points,
                     uint64_t seed,
                     double *out,
                     size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREFORM_FUSION_H */
