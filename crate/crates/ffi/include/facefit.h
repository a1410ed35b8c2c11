#ifndef FACEFIT_H
#define FACEFIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum FfStatus {
  FF_STATUS_OK = 0,
  FF_STATUS_NULL_POINTER = 1,
  FF_STATUS_INVALID_ARGUMENT = 2,
  FF_STATUS_IO = 3,
  FF_STATUS_FORMAT = 4,
  /**
   * Divergence, a non-finite loss, or a face behind the camera.
   */
  FF_STATUS_DIVERGED = 5,
  FF_STATUS_INTERNAL = 6,
} FfStatus;

/**
 * A loaded morphable model.
 */
typedef struct FfModel FfModel;

/**
 * Result of a fit.
 */
typedef struct FfReport FfReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Load a model from an `.fmb` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FfStatus ff_model_load(const char *path, struct FfModel **out);

/**
 * Generate the deterministic synthetic model.
 *
 * # Safety
 * `out` must be writable.
 */
enum FfStatus ff_model_synthetic(uint64_t seed,
                                 size_t vertices,
                                 size_t shape_dim,
                                 size_t expression_dim,
                                 size_t texture_dim,
                                 struct FfModel **out);

/**
 * # Safety
 * `model` must come from `ff_model_load` or `ff_model_synthetic`, or be null.
 */
void ff_model_free(struct FfModel *model);

/**
 * Vertex count and coefficient dimensions. Any output pointer may be null.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum FfStatus ff_model_dims(const struct FfModel *model,
                            size_t *vertices,
                            size_t *shape_dim,
                            size_t *expression_dim,
                            size_t *texture_dim);

/**
 * Move upper-lid landmarks towards their lower partners by the closure probabilities.
 * `input` and `output` hold 136 doubles and may alias.
 *
 * # Safety
 * Both arrays must hold 136 doubles.
 */
enum FfStatus ff_landmarks_adjust(const double *input,
                                  double p_right,
                                  double p_left,
                                  double *output);

/**
 * Closure probability of one eye from its six landmarks (12 doubles) by eye aspect ratio.
 *
 * # Safety
 * `eye` must hold 12 doubles; `out` must be writable.
 */
enum FfStatus ff_ear_probe(const double *eye, double *out);

/**
 * Landmark distance loss between predicted and observed landmarks (136 doubles each).
 *
 * # Safety
 * Both arrays must hold 136 doubles; `out` must be writable.
 */
enum FfStatus ff_ldl(const double *predicted,
                     const double *observed,
                     bool eyes,
                     bool mouth,
                     double *out);

/**
 * Fit `model` to 68 landmarks in a `width` x `height` image.
 *
 * `config` holds `key = value` lines as accepted by the command line tool, or is null for
 * defaults. `eye_state` is the known state for the label probe: -1 unknown, 0 open, 1 closed.
 * On `FF_STATUS_DIVERGED` from an optimizer blow-up, `*out` still receives the partial report.
 *
 * # Safety
 * `model` must be live, `landmarks` must hold 136 doubles, `config` must be null or
 * NUL-terminated, and `out` must be writable.
 */
enum FfStatus ff_fit_landmarks(const struct FfModel *model,
                               const double *landmarks,
                               uint32_t width,
                               uint32_t height,
                               const char *config,
                               int32_t eye_state,
                               struct FfReport **out);

/**
 * # Safety
 * `report` must come from `ff_fit_landmarks`, or be null.
 */
void ff_report_free(struct FfReport *report);

/**
 * Weighted total loss at the best iterate.
 *
 * # Safety
 * `report` must be live; `out` must be writable.
 */
enum FfStatus ff_report_total_loss(const struct FfReport *report, double *out);

/**
 * Copy the fitted parameter vector (shape, expression, texture, lighting, rotation,
 * translation) into `buffer`. `*len` is always set to the full length; pass a null
 * `buffer` to query it. A non-null buffer shorter than that is an invalid argument.
 *
 * # Safety
 * `buffer` must be null or hold `capacity` doubles; `len` must be writable.
 */
enum FfStatus ff_report_params(const struct FfReport *report,
                               double *buffer,
                               size_t capacity,
                               size_t *len);

/**
 * The report as JSON. Release the string with `ff_string_free`.
 *
 * # Safety
 * `report` must be live; `out` must be writable.
 */
enum FfStatus ff_report_to_json(const struct FfReport *report, char **out);

/**
 * # Safety
 * `s` must come from this library, or be null.
 */
void ff_string_free(char *s);

/**
 * Message for the last failed call on this thread, or null. Valid until the next call.
 */
const char *ff_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACEFIT_H */
