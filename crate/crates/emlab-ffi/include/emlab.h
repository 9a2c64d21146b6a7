#ifndef EMLAB_H
#define EMLAB_H

/* This file is generated by cbindgen from emlab-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible entry point.
typedef enum EmlabStatus {
  EMLAB_STATUS_OK = 0,
  EMLAB_STATUS_NULL_POINTER = 1,
  EMLAB_STATUS_INVALID_UTF8 = 2,
  EMLAB_STATUS_INVALID_CONFIG = 3,
  EMLAB_STATUS_NUMERICAL_FAILURE = 4,
  EMLAB_STATUS_IO_ERROR = 5,
  EMLAB_STATUS_VERSION_MISMATCH = 6,
  // The experiment ran but an embedded pass/fail check failed; the
  // result JSON is still produced.
  EMLAB_STATUS_CHECKS_FAILED = 7,
  // A panic was caught at the boundary.
  EMLAB_STATUS_PANIC = 8,
} EmlabStatus;

// Opaque drift handle.
typedef struct EmlabDrift EmlabDrift;

// Opaque scale-transform handle (one-dimensional drifts only).
typedef struct EmlabScaleTable EmlabScaleTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *emlab_version(void);

// Human-readable description of a status code (static string).
const char *emlab_status_message(enum EmlabStatus status);

// Runs one experiment from a JSON config and hands back the results JSON.
//
// On `Ok` (and on `ChecksFailed`) `*out_json` holds a NUL-terminated
// string owned by the caller; free it with `emlab_string_free`.
//
// # Safety
// `config_json` must be a valid NUL-terminated string or null;
// `out_json` must point to writable pointer storage.
enum EmlabStatus emlab_run_json(const char *config_json, char **out_json);

// Re-executes the config embedded in a results JSON and reports the
// comparison verdict as JSON (owned by the caller).
//
// # Safety
// As for [`emlab_run_json`].
enum EmlabStatus emlab_reproduce_json(const char *results_json, char **out_verdict_json);

// Frees a string returned by this library.
//
// # Safety
// `s` must be a pointer previously handed out by this library through an
// out-parameter, or null.
void emlab_string_free(char *s);

// Creates a drift handle from the registry. `param` may be null (builtin
// default). Returns null on unknown names or invalid parameters.
//
// # Safety
// `name` must be a valid NUL-terminated string; `param` null or valid.
struct EmlabDrift *emlab_drift_new(const char *name, size_t dimension, const double *param);

// Evaluates b(x) into `out` (both of length `len`, which must equal the
// drift's dimension).
//
// # Safety
// `drift` must come from [`emlab_drift_new`]; `x` and `out` must point to
// `len` readable/writable doubles.
enum EmlabStatus emlab_drift_eval(const struct EmlabDrift *drift,
                                  const double *x,
                                  size_t len,
                                  double *out);

// The declared sup-norm bound of a drift handle (NaN for null).
//
// # Safety
// `drift` must come from [`emlab_drift_new`] or be null.
double emlab_drift_sup_bound(const struct EmlabDrift *drift);

// Releases a drift handle.
//
// # Safety
// `drift` must come from [`emlab_drift_new`] and not be freed twice.
void emlab_drift_free(struct EmlabDrift *drift);

// Tabulates the drift-removing scale function of a scalar registry drift
// around `center` on `[center - radius, center + radius]` with step
// `step`. Returns null on invalid parameters.
//
// # Safety
// `drift_name` must be a valid NUL-terminated string; `param` null or
// valid.
struct EmlabScaleTable *emlab_scale_table_new(const char *drift_name,
                                              const double *param,
                                              double center,
                                              double radius,
                                              double step);

// Evaluates the scale function at `x` (must lie inside the table).
//
// # Safety
// `table` must come from [`emlab_scale_table_new`]; `out` must be
// writable.
enum EmlabStatus emlab_scale_table_phi(const struct EmlabScaleTable *table, double x, double *out);

// Evaluates the inverse scale function at `y` (must lie in the range of
// phi).
//
// # Safety
// As for [`emlab_scale_table_phi`].
enum EmlabStatus emlab_scale_table_psi(const struct EmlabScaleTable *table, double y, double *out);

// Releases a scale-table handle.
//
// # Safety
// `table` must come from [`emlab_scale_table_new`] and not be freed twice.
void emlab_scale_table_free(struct EmlabScaleTable *table);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMLAB_H */
