#ifndef SCANDOC_H
#define SCANDOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum ScandocStatus {
  SCANDOC_STATUS_OK = 0,
  SCANDOC_STATUS_NULL_POINTER = 1,
  SCANDOC_STATUS_INVALID_ARGUMENT = 2,
  SCANDOC_STATUS_PARSE = 3,
  SCANDOC_STATUS_IO = 4,
  SCANDOC_STATUS_DEGENERATE = 5,
  SCANDOC_STATUS_NUMERIC = 6,
  SCANDOC_STATUS_ENGINE = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  SCANDOC_STATUS_INTERNAL = 99,
} ScandocStatus;

/**
 * Greyscale page image.
 */
typedef struct ScandocImage ScandocImage;

/**
 * Pages of OCR words, in reading order.
 */
typedef struct ScandocPages ScandocPages;

/**
 * Paired DeLong comparison of two score vectors.
 */
typedef struct ScandocDelong {
  double auc_a;
  double auc_b;
  double z;
  double p_value;
} ScandocDelong;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Owned by the
 * library and valid until the next call on the same thread.
 */
const char *scandoc_last_error(void);

/**
 * Library version as a static string.
 */
const char *scandoc_version(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void scandoc_string_free(char *s);

/**
 * Wraps `width * height` row-major bytes as an image.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum ScandocStatus scandoc_image_new(uint32_t width,
                                     uint32_t height,
                                     const uint8_t *data,
                                     size_t len,
                                     struct ScandocImage **out);

/**
 * Reads a PNG or PGM page, converting colour to grey.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum ScandocStatus scandoc_image_load(const char *path, struct ScandocImage **out);

/**
 * Writes the image; the format follows the extension.
 *
 * # Safety
 * `img` must be a live handle and `path` a nul-terminated string.
 */
enum ScandocStatus scandoc_image_save(const struct ScandocImage *img, const char *path);

/**
 * Width in pixels, 0 for a null handle.
 *
 * # Safety
 * `img` must be null or a live handle.
 */
uint32_t scandoc_image_width(const struct ScandocImage *img);

/**
 * Height in pixels, 0 for a null handle.
 *
 * # Safety
 * `img` must be null or a live handle.
 */
uint32_t scandoc_image_height(const struct ScandocImage *img);

/**
 * Borrowed pixel buffer, valid while the handle lives.
 *
 * # Safety
 * `img` must be null or a live handle; `len` must be null or writable.
 */
const uint8_t *scandoc_image_data(const struct ScandocImage *img, size_t *len);

/**
 * Applies a named preprocessing recipe (`gray`, `gray_de`, `gray_c20`,
 * `gray_c60`, `gray_de_c20`, `gray_de_c60`) into a new image.
 *
 * # Safety
 * `img` must be a live handle, `recipe` a nul-terminated string and `out` writable.
 */
enum ScandocStatus scandoc_image_apply_recipe(const struct ScandocImage *img,
                                              const char *recipe,
                                              struct ScandocImage **out);

/**
 * # Safety
 * `img` must be null or a handle not yet freed.
 */
void scandoc_image_free(struct ScandocImage *img);

/**
 * Parses a tab-separated OCR word table held in memory.
 *
 * # Safety
 * `tsv` must be a nul-terminated string; `out` must be writable.
 */
enum ScandocStatus scandoc_pages_parse(const char *tsv, struct ScandocPages **out);

/**
 * Reads an OCR word table from disk.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum ScandocStatus scandoc_pages_load(const char *path, struct ScandocPages **out);

/**
 * Number of pages, 0 for a null handle.
 *
 * # Safety
 * `pages` must be null or a live handle.
 */
size_t scandoc_pages_count(const struct ScandocPages *pages);

/**
 * Words on the page at position `index`, 0 when out of range.
 *
 * # Safety
 * `pages` must be null or a live handle.
 */
size_t scandoc_pages_word_count(const struct ScandocPages *pages, size_t index);

/**
 * Numeric candidates with their context windows, as instance CSV text.
 * Labels are all `Other`; the caller frees the string.
 *
 * # Safety
 * `pages` must be a live handle, `report_id` a nul-terminated string and
 * `out_csv` writable.
 */
enum ScandocStatus scandoc_pages_instances_csv(const struct ScandocPages *pages,
                                               const char *report_id,
                                               size_t radius,
                                               char **out_csv);

/**
 * # Safety
 * `pages` must be null or a handle not yet freed.
 */
void scandoc_pages_free(struct ScandocPages *pages);

/**
 * Area under the ROC curve; `labels` holds 1 for positives, 0 otherwise.
 *
 * # Safety
 * `scores` and `labels` must each point to `n` readable elements; `out` must be writable.
 */
enum ScandocStatus scandoc_roc_auc(const double *scores,
                                   const uint8_t *labels,
                                   size_t n,
                                   double *out);

/**
 * Paired DeLong test of two score vectors over the same `n` labelled instances.
 *
 * # Safety
 * `scores_a`, `scores_b` and `labels` must each point to `n` readable
 * elements; `out` must be writable.
 */
enum ScandocStatus scandoc_delong(const double *scores_a,
                                  const double *scores_b,
                                  const uint8_t *labels,
                                  size_t n,
                                  struct ScandocDelong *out);

/**
 * Bonferroni-adjusted p-values, written to `out` (`n` slots, capped at 1).
 *
 * # Safety
 * `p_values` must point to `n` readable and `out` to `n` writable doubles.
 */
enum ScandocStatus scandoc_bonferroni(const double *p_values, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCANDOC_H */
