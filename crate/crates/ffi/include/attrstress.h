#ifndef ATTRSTRESS_H
#define ATTRSTRESS_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define ATTRSTRESS_OK 0

#define ATTRSTRESS_ERR_NULL_POINTER 1

#define ATTRSTRESS_ERR_INVALID_PARAMETER 2

#define ATTRSTRESS_ERR_MISSING_FILE 3

#define ATTRSTRESS_ERR_BAD_CHECKPOINT 4

#define ATTRSTRESS_ERR_DIMENSION 5

#define ATTRSTRESS_ERR_UNSUPPORTED 6

#define ATTRSTRESS_ERR_OVERFLOW 7

#define ATTRSTRESS_ERR_NUMERIC 8

#define ATTRSTRESS_ERR_INTERNAL 9

/**
 * Opaque model handle.
 */
typedef struct AttrstressModel AttrstressModel;

/**
 * Interior rows and columns of an object, inclusive.
 */
typedef struct AttrstressBox {
  size_t row_min;
  size_t row_max;
  size_t col_min;
  size_t col_max;
} AttrstressBox;

typedef struct AttrstressDiceReport {
  size_t n;
  size_t n_ref;
  double closed_form;
  /**
   * NaN when N is too large for the exact path.
   */
  double exhaustive_mean;
  double mc_mean;
  size_t mc_trials;
  double mc_stderr;
} AttrstressDiceReport;

typedef struct AttrstressCounterexample {
  double unmasked_logits[3];
  double mask_top_logits[3];
  double mask_other_logits[3];
  double mask_all_logits[3];
  size_t top_feature;
  size_t prediction_unmasked;
  size_t prediction_mask_top;
  size_t prediction_mask_other;
  bool verdict;
} AttrstressCounterexample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *attrstress_last_error(void);

/**
 * Null-terminated library version.
 */
const char *attrstress_version(void);

int32_t attrstress_model_load(const char *path, struct AttrstressModel **out);

/**
 * Seeded, untrained ConvNet for 28x28 inputs.
 */
int32_t attrstress_model_untrained(uint64_t seed, struct AttrstressModel **out);

/**
 * Accepts null.
 */
void attrstress_model_free(struct AttrstressModel *model);

int32_t attrstress_model_shape(const struct AttrstressModel *model,
                               size_t *height,
                               size_t *width,
                               size_t *classes);

/**
 * Writes `classes` logits for one image of `height * width` pixels.
 */
int32_t attrstress_model_logits(const struct AttrstressModel *model,
                                const double *pixels,
                                size_t n_pixels,
                                double *out,
                                size_t n_out);

/**
 * Attribution map for `target`. `method` is a method id such as
 * `"gradient"` or `"grad_cam"`; `seed` only matters for `"random"`.
 */
int32_t attrstress_attribute(const struct AttrstressModel *model,
                             const char *method,
                             const double *pixels,
                             size_t n_pixels,
                             size_t target,
                             uint64_t seed,
                             double *out,
                             size_t n_out);

/**
 * Pointing Game over `n_maps` maps of `height * width` values stored
 * back to back, one box per map.
 */
int32_t attrstress_pointing_game(const double *maps,
                                 size_t n_maps,
                                 size_t height,
                                 size_t width,
                                 const struct AttrstressBox *boxes,
                                 double tolerance,
                                 size_t *hits,
                                 double *ratio);

int32_t attrstress_dice_closed_form(size_t n, size_t n_ref, double *out);

/**
 * Exact expected Dice as a reduced fraction (N <= 20).
 */
int32_t attrstress_dice_exhaustive(size_t n, size_t n_ref, uint64_t *num, uint64_t *den);

int32_t attrstress_dice_monte_carlo(size_t n,
                                    size_t n_ref,
                                    size_t trials,
                                    uint64_t seed,
                                    struct AttrstressDiceReport *out);

/**
 * The three-class, two-feature linear counterexample.
 */
int32_t attrstress_counterexample(struct AttrstressCounterexample *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATTRSTRESS_H */
