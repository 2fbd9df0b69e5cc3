#ifndef NEUROEXPLAIN_H
#define NEUROEXPLAIN_H

/* Generated with cbindgen:0.27.0 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum NxStatus {
  NX_STATUS_OK = 0,
  NX_STATUS_NULL_POINTER = 1,
  NX_STATUS_INVALID_ARGUMENT = 2,
  NX_STATUS_IO = 3,
  NX_STATUS_FORMAT = 4,
  NX_STATUS_PROCESSING = 5,
  NX_STATUS_PANIC = 6,
} NxStatus;

/**
 * How ties in the percentile search are broken.
 */
typedef enum NxTieBreak {
  NX_TIE_BREAK_LOWEST_ALPHA = 0,
  NX_TIE_BREAK_HIGHEST_ALPHA = 1,
} NxTieBreak;

/**
 * Labelled 3-D atlas with region names.
 */
typedef struct NxAtlas NxAtlas;

/**
 * Saliency heatmap, values in [0, 1].
 */
typedef struct NxHeatmap NxHeatmap;

/**
 * Binary mask.
 */
typedef struct NxMask NxMask;

/**
 * Segmentation parameters. Start from [`nx_segmentation_params_default`].
 */
typedef struct NxSegmentationParams {
  uint32_t alpha_low;
  uint32_t alpha_high;
  size_t s_min;
  size_t radius;
  double epsilon;
  enum NxTieBreak tie_break;
} NxSegmentationParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *nx_version(void);

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call into the library on this
 * thread.
 */
const char *nx_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void nx_string_free(char *s);

struct NxSegmentationParams nx_segmentation_params_default(void);

/**
 * Builds a heatmap from `width * height` row-major values.
 *
 * # Safety
 * `values` must point to `width * height` doubles; `out` must be writable.
 */
enum NxStatus nx_heatmap_new(size_t width,
                             size_t height,
                             const double *values,
                             struct NxHeatmap **out);

/**
 * Reads a 2-D float `.npy` heatmap.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum NxStatus nx_heatmap_read_npy(const char *path, struct NxHeatmap **out);

/**
 * # Safety
 * `heatmap` must be null or a live handle from this library.
 */
void nx_heatmap_free(struct NxHeatmap *heatmap);

/**
 * # Safety
 * `heatmap` must be a live handle; `width` and `height` must be writable.
 */
enum NxStatus nx_heatmap_shape(const struct NxHeatmap *heatmap, size_t *width, size_t *height);

/**
 * Builds a mask from `width * height` row-major bytes; non-zero is
 * foreground.
 *
 * # Safety
 * `bits` must point to `width * height` bytes; `out` must be writable.
 */
enum NxStatus nx_mask_new(size_t width, size_t height, const uint8_t *bits, struct NxMask **out);

/**
 * Reads a grayscale PNG mask; pixels above 127 are foreground.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum NxStatus nx_mask_read_png(const char *path, struct NxMask **out);

/**
 * Writes the mask as an 8-bit PNG (0 or 255).
 *
 * # Safety
 * `mask` must be a live handle; `path` a NUL-terminated string.
 */
enum NxStatus nx_mask_write_png(const struct NxMask *mask, const char *path);

/**
 * # Safety
 * `mask` must be null or a live handle from this library.
 */
void nx_mask_free(struct NxMask *mask);

/**
 * # Safety
 * `mask` must be a live handle; `width` and `height` must be writable.
 */
enum NxStatus nx_mask_shape(const struct NxMask *mask, size_t *width, size_t *height);

/**
 * # Safety
 * `mask` must be a live handle; `count` must be writable.
 */
enum NxStatus nx_mask_count(const struct NxMask *mask, size_t *count);

/**
 * Copies the mask into `buf` as row-major 0/1 bytes. `len` must equal
 * `width * height`.
 *
 * # Safety
 * `mask` must be a live handle; `buf` must have room for `len` bytes.
 */
enum NxStatus nx_mask_copy_bits(const struct NxMask *mask, uint8_t *buf, size_t len);

/**
 * Reads a NIfTI-1 label volume (`.nii`, `.nii.gz` or `.hdr`/`.img`) and a
 * label table (CSV or FSL XML).
 *
 * # Safety
 * Paths must be NUL-terminated strings; `out` must be writable.
 */
enum NxStatus nx_atlas_read(const char *volume_path, const char *labels_path, struct NxAtlas **out);

/**
 * # Safety
 * `atlas` must be null or a live handle from this library.
 */
void nx_atlas_free(struct NxAtlas *atlas);

/**
 * # Safety
 * `atlas` must be a live handle; `depth` must be writable.
 */
enum NxStatus nx_atlas_depth(const struct NxAtlas *atlas, size_t *depth);

/**
 * Thresholds `heatmap` at the percentile that maximizes Dice against
 * `reference`, then cleans the mask. `params` may be null for defaults.
 * Writes the final mask handle and a JSON summary with `alpha_star`,
 * `threshold`, `search_dsc`, `dsc`, `iou` and `foreground`.
 *
 * # Safety
 * Handles must be live; `out_mask` and `out_json` must be writable.
 */
enum NxStatus nx_segment(const struct NxHeatmap *heatmap,
                         const struct NxMask *reference,
                         const struct NxSegmentationParams *params,
                         struct NxMask **out_mask,
                         char **out_json);

/**
 * Connected regions (4-connectivity) of a mask as a JSON array of
 * `{label, area, bbox}`.
 *
 * # Safety
 * `mask` must be a live handle; `out_json` must be writable.
 */
enum NxStatus nx_extract_rois(const struct NxMask *mask, char **out_json);

/**
 * Per-region overlap of `mask` with axial slice `slice` of `atlas`. A
 * negative `slice` selects the middle slice. The JSON object carries
 * `slice`, `foreground`, `rows` (label, region_name, voxel_count,
 * percentage) and `warnings`.
 *
 * # Safety
 * Handles must be live; `out_json` must be writable.
 */
enum NxStatus nx_map_atlas(const struct NxMask *mask,
                           const struct NxAtlas *atlas,
                           int64_t slice,
                           char **out_json);

/**
 * TTR, Maas, Flesch reading ease and coherence of `text` as JSON.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out_json` must be writable.
 */
enum NxStatus nx_text_metrics(const char *text, char **out_json);

/**
 * Validates a findings document and writes its canonical serialization.
 * Schema violations are reported as `NX_STATUS_FORMAT` with one line per
 * violation in the error message.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out_canonical` must be writable.
 */
enum NxStatus nx_findings_validate(const char *json, char **out_canonical);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEUROEXPLAIN_H */
