#ifndef MSTH_H
#define MSTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum MsthStatus {
  MSTH_STATUS_OK = 0,
  MSTH_STATUS_NULL_POINTER = 1,
  MSTH_STATUS_INVALID_UTF8 = 2,
  MSTH_STATUS_CONFIG = 3,
  MSTH_STATUS_DATA = 4,
  MSTH_STATUS_RUNTIME = 5,
  MSTH_STATUS_PANIC = 6,
} MsthStatus;

// Opaque experiment configuration.
typedef struct MsthConfig MsthConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next call on the same thread.
const char *msth_last_error(void);

// Library version as a static NUL-terminated string.
const char *msth_version(void);

// Default configuration.
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum MsthStatus msth_config_new(struct MsthConfig **out);

// Configuration parsed from `key = value` lines.
//
// # Safety
// `text` must be NUL-terminated; `out` must be writable.
enum MsthStatus msth_config_from_text(const char *text, struct MsthConfig **out);

// Set one configuration key, e.g. `train.lr` to `0.01`.
//
// # Safety
// `cfg` must come from this library; strings must be NUL-terminated.
enum MsthStatus msth_config_set(struct MsthConfig *cfg, const char *key, const char *value);

// Resolved configuration as text; free with `msth_string_free`.
//
// # Safety
// `cfg` must come from this library; `out` must be writable.
enum MsthStatus msth_config_to_text(const struct MsthConfig *cfg, char **out);

// SHA-256 hex digest of the resolved configuration; free with
// `msth_string_free`.
//
// # Safety
// `cfg` must come from this library; `out` must be writable.
enum MsthStatus msth_config_hash(const struct MsthConfig *cfg, char **out);

// # Safety
// `cfg` must come from this library and not be used afterwards. NULL is
// ignored.
void msth_config_free(struct MsthConfig *cfg);

// Run the experiment and return its summary as JSON. With `write_files`
// non-zero the usual output files are written to the configured directory.
//
// # Safety
// `cfg` must come from this library; `out_json` must be writable.
enum MsthStatus msth_run(const struct MsthConfig *cfg, int32_t write_files, char **out_json);

// # Safety
// `s` must come from this library and not be used afterwards. NULL is
// ignored.
void msth_string_free(char *s);

// Emergency predicate with the default thresholds.
//
// # Safety
// `a` must point to `n` readable values; `out` must be writable.
enum MsthStatus msth_detect_emergency(const double *a,
                                      size_t n,
                                      uint64_t steps_since_last_ultra,
                                      uint32_t consecutive_ultra,
                                      bool *out);

// Suppress overactive entries into `out` (may alias `a`).
//
// # Safety
// `a` must hold `n` readable values and `out` `n` writable ones.
enum MsthStatus msth_suppress(const double *a, size_t n, double *out);

// One calcium pump step into `out` (may alias `c`); `fired` reports
// whether the pump acted.
//
// # Safety
// `c` must hold `n` readable values, `out` `n` writable ones, `fired` one.
enum MsthStatus msth_regulate_calcium(const double *c, size_t n, double *out, bool *fired);

// Realism score of four intervention counts (ultra, fast, medium, slow).
//
// # Safety
// `counts` must point to four readable values; `out` must be writable.
enum MsthStatus msth_realism_score(const uint64_t *counts,
                                   uint64_t coordination_events,
                                   double *out);

// Health-scaled learning rate `base_lr * h_current * h_stability`.
//
// # Safety
// `out` must be writable.
enum MsthStatus msth_scaled_lr(double base_lr, double h_current, double h_stability, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSTH_H */
