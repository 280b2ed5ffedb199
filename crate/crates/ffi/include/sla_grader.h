#ifndef SLA_GRADER_H
#define SLA_GRADER_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SlaStatus {
  SLA_STATUS_OK = 0,
  SLA_STATUS_NULL_POINTER = 1,
  SLA_STATUS_INVALID_ARGUMENT = 2,
  SLA_STATUS_IO = 3,
  SLA_STATUS_FORMAT = 4,
  SLA_STATUS_DIMENSION = 5,
  SLA_STATUS_DOMAIN = 6,
  SLA_STATUS_UNDEFINED_METRIC = 7,
  SLA_STATUS_DEGENERATE_FIT = 8,
  SLA_STATUS_PANIC = 99,
} SlaStatus;

typedef enum SlaHead {
  SLA_HEAD_CE = 0,
  SLA_HEAD_FA = 1,
  SLA_HEAD_REG = 2,
} SlaHead;

typedef enum SlaDecodeMode {
  SLA_DECODE_MODE_HARD = 0,
  SLA_DECODE_MODE_SOFT = 1,
  SLA_DECODE_MODE_REG = 2,
} SlaDecodeMode;

/**
 * Opaque grader model.
 */
typedef struct SlaModel SlaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sla_version(void);

/**
 * Message for the last failure on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *sla_last_error_message(void);

/**
 * Reads a model file. On success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum SlaStatus sla_model_load(const char *path, struct SlaModel **out);

/**
 * Writes a model file.
 *
 * # Safety
 * `model` must come from [`sla_model_load`]; `path` must be NUL-terminated.
 */
enum SlaStatus sla_model_save(const struct SlaModel *model, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a live handle, and must not be used afterwards.
 */
void sla_model_free(struct SlaModel *model);

/**
 * Feature dimension the model expects, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t sla_model_input_dim(const struct SlaModel *model);

/**
 * Width of the model's raw output: the class count, or 1 for regression.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t sla_model_output_dim(const struct SlaModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SlaStatus sla_model_head(const struct SlaModel *model, enum SlaHead *out);

/**
 * Raw outputs (logits, or the regression value) for one feature vector.
 *
 * # Safety
 * `x` must hold `x_len` values and `out` room for `out_len` values.
 */
enum SlaStatus sla_model_forward(const struct SlaModel *model,
                                 const double *x,
                                 size_t x_len,
                                 double *out,
                                 size_t out_len);

/**
 * Scores one response from its chunks, stored row-major as
 * `n_chunks * dim` values, and writes the mean chunk score.
 *
 * # Safety
 * `chunks` must hold `n_chunks * dim` values and `out_score` be writable.
 */
enum SlaStatus sla_model_predict(const struct SlaModel *model,
                                 const double *chunks,
                                 size_t n_chunks,
                                 size_t dim,
                                 enum SlaDecodeMode mode,
                                 double *out_score);

/**
 * Softmax of `n` logits into `out` (room for `n` values).
 *
 * # Safety
 * `logits` and `out` must each hold `n` values.
 */
enum SlaStatus sla_softmax(const double *logits, size_t n, double *out);

/**
 * Decodes six class logits (A..F, scores 6..1) with hard or soft decoding.
 *
 * # Safety
 * `logits` must hold `n` values and `out_score` be writable.
 */
enum SlaStatus sla_decode_logits(const double *logits,
                                 size_t n,
                                 enum SlaDecodeMode mode,
                                 double *out_score);

/**
 * # Safety
 * `preds` and `refs` must each hold `n` values; `out` must be writable.
 */
enum SlaStatus sla_rmse(const double *preds, const double *refs, size_t n, double *out);

/**
 * # Safety
 * As [`sla_rmse`].
 */
enum SlaStatus sla_pcc(const double *preds, const double *refs, size_t n, double *out);

/**
 * # Safety
 * As [`sla_rmse`].
 */
enum SlaStatus sla_src(const double *preds, const double *refs, size_t n, double *out);

/**
 * Least-squares `refs ≈ slope * preds + intercept`.
 *
 * # Safety
 * `preds` and `refs` must each hold `n` values; both outputs writable.
 */
enum SlaStatus sla_calibration_fit(const double *preds,
                                   const double *refs,
                                   size_t n,
                                   double *out_slope,
                                   double *out_intercept);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLA_GRADER_H */
