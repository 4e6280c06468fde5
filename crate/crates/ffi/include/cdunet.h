#ifndef CDUNET_H
#define CDUNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CdunetStatus {
  CDUNET_STATUS_OK = 0,
  CDUNET_STATUS_NULL_POINTER = 1,
  CDUNET_STATUS_INVALID_ARGUMENT = 2,
  CDUNET_STATUS_IO = 3,
  CDUNET_STATUS_BAD_WEIGHTS = 4,
  CDUNET_STATUS_RUNTIME = 5,
  CDUNET_STATUS_PANIC = 6,
} CdunetStatus;

/**
 * Opaque model handle.
 */
typedef struct CdunetModel CdunetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call on the same thread.
 */
const char *cdunet_last_error(void);

/**
 * Static description of a status code.
 */
const char *cdunet_status_str(enum CdunetStatus status);

/**
 * Loads a weights file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CdunetStatus cdunet_model_load(const char *path, struct CdunetModel **out);

/**
 * Seeded untrained model of the named variant (`cdunet`, `unet_plain`,
 * `unet_ipd` or `unet_bf`).
 *
 * # Safety
 * `variant` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CdunetStatus cdunet_model_init(const char *variant, uint64_t seed, struct CdunetModel **out);

/**
 * Writes the model's weights to `path`.
 *
 * # Safety
 * `model` must come from this library and `path` be NUL-terminated.
 */
enum CdunetStatus cdunet_model_save(const struct CdunetModel *model, const char *path);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards. Null is
 * ignored.
 */
void cdunet_model_free(struct CdunetModel *model);

/**
 * Number of trainable parameters.
 *
 * # Safety
 * `model` must come from this library and `out` be a valid pointer.
 */
enum CdunetStatus cdunet_model_param_count(const struct CdunetModel *model, size_t *out);

/**
 * Enhances the talker at `target_deg` from a two-channel recording of
 * `len` samples per channel. `out` receives `len` samples.
 *
 * # Safety
 * `mic1`, `mic2` and `out` must each point to `len` floats.
 */
enum CdunetStatus cdunet_enhance(const struct CdunetModel *model,
                                 const float *mic1,
                                 const float *mic2,
                                 size_t len,
                                 uint32_t sample_rate,
                                 double target_deg,
                                 double width_deg,
                                 float *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDUNET_H */
