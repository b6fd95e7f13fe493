#ifndef GHOSTKIT_H
#define GHOSTKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GkPatternKind {
  /**
   * `param` is the on-probability.
   */
  GK_PATTERN_KIND_BERNOULLI = 0,
  /**
   * `param` is the correlation length in pixels.
   */
  GK_PATTERN_KIND_SPECKLE = 1,
  /**
   * `param` is ignored.
   */
  GK_PATTERN_KIND_HADAMARD = 2,
} GkPatternKind;

typedef enum GkStatus {
  GK_STATUS_OK = 0,
  GK_STATUS_NULL_POINTER = 1,
  GK_STATUS_INVALID_ARGUMENT = 2,
  GK_STATUS_SHAPE = 3,
  GK_STATUS_UNSUPPORTED_SIZE = 4,
  GK_STATUS_CONFIG = 5,
  GK_STATUS_NUMERICAL = 6,
  GK_STATUS_IO = 7,
  GK_STATUS_FORMAT = 8,
  GK_STATUS_BUFFER_TOO_SMALL = 9,
  GK_STATUS_PANIC = 10,
} GkStatus;

typedef struct GkImage GkImage;

typedef struct GkPatterns GkPatterns;

typedef struct GkSignal GkSignal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *gk_last_error(void);

/**
 * Library version as a static string.
 */
const char *gk_version(void);

/**
 * Image from `width * height` row-major values.
 *
 * # Safety
 * `data` must point to `width * height` readable doubles.
 */
enum GkStatus gk_image_new(size_t width, size_t height, const double *data, struct GkImage **image);

/**
 * Builtin target: a single letter, `bars` or `photo`.
 *
 * # Safety
 * `name` must be a nul-terminated string.
 */
enum GkStatus gk_image_builtin(const char *name,
                               size_t width,
                               size_t height,
                               struct GkImage **image);

/**
 * # Safety
 * `image` must be a live handle and the outputs writable.
 */
enum GkStatus gk_image_dims(const struct GkImage *image, size_t *width, size_t *height);

/**
 * Copies the pixels into `data`, which holds `len` doubles.
 *
 * # Safety
 * `image` must be a live handle and `data` writable for `len` doubles.
 */
enum GkStatus gk_image_read(const struct GkImage *image, double *data, size_t len);

/**
 * # Safety
 * `image` must be null or a handle not yet freed.
 */
void gk_image_free(struct GkImage *image);

/**
 * Seeded pattern stack of `count` patterns.
 *
 * # Safety
 * `patterns` must be writable.
 */
enum GkStatus gk_patterns_generate(enum GkPatternKind kind,
                                   double param,
                                   size_t count,
                                   size_t width,
                                   size_t height,
                                   uint64_t seed,
                                   struct GkPatterns **patterns);

/**
 * # Safety
 * `patterns` must be a live handle and `count` writable.
 */
enum GkStatus gk_patterns_count(const struct GkPatterns *patterns, size_t *count);

/**
 * # Safety
 * `patterns` must be null or a handle not yet freed.
 */
void gk_patterns_free(struct GkPatterns *patterns);

/**
 * Bucket signal from `len` values.
 *
 * # Safety
 * `values` must point to `len` readable doubles.
 */
enum GkStatus gk_signal_new(const double *values, size_t len, struct GkSignal **signal);

/**
 * Noiseless bucket values of `image` under `patterns`.
 *
 * # Safety
 * Handles must be live and `signal` writable.
 */
enum GkStatus gk_measure(const struct GkImage *image,
                         const struct GkPatterns *patterns,
                         struct GkSignal **signal);

/**
 * # Safety
 * `signal` must be a live handle and `len` writable.
 */
enum GkStatus gk_signal_len(const struct GkSignal *signal, size_t *len);

/**
 * # Safety
 * `signal` must be a live handle and `values` writable for `len` doubles.
 */
enum GkStatus gk_signal_read(const struct GkSignal *signal, double *values, size_t len);

/**
 * # Safety
 * `signal` must be null or a handle not yet freed.
 */
void gk_signal_free(struct GkSignal *signal);

/**
 * Reconstructs an image, normalized to [0,1]. `method` is a method name
 * (GI, DGI, GICS, CNN, UNET, GILM) or a JSON method object.
 *
 * # Safety
 * Handles must be live, `method` nul-terminated and `image` writable.
 */
enum GkStatus gk_reconstruct(const struct GkPatterns *patterns,
                             const struct GkSignal *signal,
                             const char *method,
                             uint64_t seed,
                             struct GkImage **image);

/**
 * PSNR in dB with peak 1; identical images give +infinity.
 *
 * # Safety
 * Handles must be live and `value` writable.
 */
enum GkStatus gk_psnr(const struct GkImage *image, const struct GkImage *reference, double *value);

/**
 * Mean windowed SSIM.
 *
 * # Safety
 * Handles must be live and `value` writable.
 */
enum GkStatus gk_ssim(const struct GkImage *image, const struct GkImage *reference, double *value);

/**
 * Display string for M / (width * height), nul-terminated into `buf`.
 *
 * # Safety
 * `buf` must be writable for `len` bytes.
 */
enum GkStatus gk_format_sampling_rate(size_t measurements,
                                      size_t width,
                                      size_t height,
                                      char *buf,
                                      size_t len);

/**
 * Writes a replay bundle directory.
 *
 * # Safety
 * Handles must be live and `dir` nul-terminated.
 */
enum GkStatus gk_bundle_save(const char *dir,
                             const struct GkPatterns *patterns,
                             const struct GkSignal *signal);

/**
 * Reads a replay bundle directory.
 *
 * # Safety
 * `dir` must be nul-terminated and the outputs writable.
 */
enum GkStatus gk_bundle_load(const char *dir,
                             struct GkPatterns **patterns,
                             struct GkSignal **signal);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GHOSTKIT_H */
