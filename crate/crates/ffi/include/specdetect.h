#ifndef SPECDETECT_H
#define SPECDETECT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Status codes returned by every entry point.
 */
typedef enum SdStatus {
  SD_STATUS_OK = 0,
  SD_STATUS_NULL_POINTER = 1,
  SD_STATUS_INVALID_ARGUMENT = 2,
  SD_STATUS_CONFIG = 3,
  SD_STATUS_IO = 4,
  SD_STATUS_BUNDLE = 5,
  SD_STATUS_SHAPE = 6,
  SD_STATUS_EMPTY = 7,
  SD_STATUS_NUMERIC = 8,
  SD_STATUS_PANIC = 9,
} SdStatus;

/**
 * Opaque embedding backend.
 */
typedef struct SdBackend SdBackend;

/**
 * Perturbation parameters; see [`sd_perturb_config_default`].
 */
typedef struct SdPerturbConfig {
  double lambda;
  double tau;
  size_t patch_size;
  uint64_t seed;
} SdPerturbConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sd_version(void);

/**
 * Message for the last failed call on this thread, or null if none.
 * Valid until the next failing call on the same thread.
 */
const char *sd_last_error_message(void);

/**
 * Defaults: lambda 0.01, tau 0.5, patch size 14, seed 0.
 */
struct SdPerturbConfig sd_perturb_config_default(void);

/**
 * Opens the weight-free spectral reference backend for `input_size`-square images.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum SdStatus sd_backend_open_spectral(size_t input_size, struct SdBackend **out);

/**
 * Opens a ViT bundle directory and selects hidden-state `layer`.
 *
 * # Safety
 * `bundle_dir` must be a NUL-terminated UTF-8 path; `out` as for
 * [`sd_backend_open_spectral`].
 */
enum SdStatus sd_backend_open_vit(const char *bundle_dir,
                                  size_t layer,
                                  size_t input_size,
                                  struct SdBackend **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `backend` must come from an `sd_backend_open_*` call and not be used afterwards.
 */
void sd_backend_free(struct SdBackend *backend);

/**
 * Embedding dimension of the backend.
 *
 * # Safety
 * `backend` must be a live handle and `out` writable.
 */
enum SdStatus sd_backend_embed_dim(const struct SdBackend *backend, size_t *out);

/**
 * Side length of the square images the backend accepts.
 *
 * # Safety
 * `backend` must be a live handle and `out` writable.
 */
enum SdStatus sd_backend_input_size(const struct SdBackend *backend, size_t *out);

/**
 * Embeds one image into `out`, which holds `out_len >= embed_dim` doubles.
 *
 * # Safety
 * `pixels` must hold `height * width * channels` doubles and `out` `out_len`.
 */
enum SdStatus sd_backend_embed(const struct SdBackend *backend,
                               const double *pixels,
                               size_t height,
                               size_t width,
                               size_t channels,
                               double *out,
                               size_t out_len);

/**
 * Writes `x + delta` for image `image_index` into `out` (same length as the input).
 *
 * # Safety
 * `cfg` must be valid; `pixels` and `out` must each hold
 * `height * width * channels` doubles.
 */
enum SdStatus sd_perturb(const struct SdPerturbConfig *cfg,
                         const double *pixels,
                         size_t height,
                         size_t width,
                         size_t channels,
                         uint64_t image_index,
                         double *out);

/**
 * Detection score `cos(f(x), f(x + delta))` of one preprocessed image.
 *
 * # Safety
 * `backend` must be a live handle, `cfg` valid, `pixels` sized as for
 * [`sd_perturb`] and `out_score` writable.
 */
enum SdStatus sd_score(const struct SdBackend *backend,
                       const struct SdPerturbConfig *cfg,
                       const double *pixels,
                       size_t height,
                       size_t width,
                       size_t channels,
                       uint64_t image_index,
                       double *out_score);

/**
 * AUC with fakes as positives; tied pairs count one half.
 *
 * # Safety
 * `real` and `fake` must hold `n_real` and `n_fake` doubles; `out` writable.
 */
enum SdStatus sd_auc(const double *real,
                     size_t n_real,
                     const double *fake,
                     size_t n_fake,
                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECDETECT_H */
