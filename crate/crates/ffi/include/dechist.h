#ifndef DECHIST_H
#define DECHIST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values 1–3 match the CLI exit codes.
 */
typedef enum DechistStatus {
  DECHIST_STATUS_OK = 0,
  DECHIST_STATUS_RUNTIME = 1,
  DECHIST_STATUS_INVALID = 2,
  DECHIST_STATUS_GUARD = 3,
  DECHIST_STATUS_IO = 4,
  DECHIST_STATUS_NULL_ARGUMENT = 5,
  DECHIST_STATUS_NOT_FOUND = 6,
  DECHIST_STATUS_PANIC = 7,
} DechistStatus;

/**
 * The result of running a scenario.
 */
typedef struct DechistResult DechistResult;

/**
 * A parsed, validated scenario.
 */
typedef struct DechistScenario DechistScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty after success.
 * Valid until the next call on this thread.
 */
const char *dechist_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dechist_version(void);

/**
 * Parses scenario JSON text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DechistStatus dechist_scenario_parse(const char *text, struct DechistScenario **out);

/**
 * Loads a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DechistStatus dechist_scenario_load(const char *path, struct DechistScenario **out);

/**
 * Looks up a bundled scenario by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DechistStatus dechist_scenario_bundled(const char *name, struct DechistScenario **out);

/**
 * Number of bundled scenarios.
 */
size_t dechist_bundled_count(void);

/**
 * Name of the i-th bundled scenario as a static string, or null when out of range.
 */
const char *dechist_bundled_name(size_t i);

/**
 * Replaces the scenario seed.
 *
 * # Safety
 * `s` must come from a `dechist_scenario_*` constructor.
 */
enum DechistStatus dechist_scenario_set_seed(struct DechistScenario *s, uint64_t seed);

/**
 * Runs the scenario. `threads` = 0 uses the global pool.
 *
 * # Safety
 * `s` must come from a `dechist_scenario_*` constructor and `out` be a valid pointer.
 */
enum DechistStatus dechist_scenario_run(const struct DechistScenario *s,
                                        size_t threads,
                                        struct DechistResult **out);

/**
 * # Safety
 * `s` must come from a `dechist_scenario_*` constructor, or be null.
 */
void dechist_scenario_free(struct DechistScenario *s);

/**
 * Number of summary entries.
 *
 * # Safety
 * `r` must come from `dechist_scenario_run`.
 */
size_t dechist_result_summary_len(const struct DechistResult *r);

/**
 * Key of the i-th summary entry, owned by the result; null when out of range.
 *
 * # Safety
 * `r` must come from `dechist_scenario_run`.
 */
const char *dechist_result_summary_key(const struct DechistResult *r, size_t i);

/**
 * Value of the i-th summary entry.
 *
 * # Safety
 * `r` must come from `dechist_scenario_run` and `value` be a valid pointer.
 */
enum DechistStatus dechist_result_summary_value(const struct DechistResult *r,
                                                size_t i,
                                                double *value);

/**
 * Summary value by key.
 *
 * # Safety
 * `r` must come from `dechist_scenario_run`, `key` be NUL-terminated and `value` valid.
 */
enum DechistStatus dechist_result_get(const struct DechistResult *r,
                                      const char *key,
                                      double *value);

/**
 * Writes `summary.json` and the CSV tables into `dir`.
 *
 * # Safety
 * `r` must come from `dechist_scenario_run` and `dir` be NUL-terminated.
 */
enum DechistStatus dechist_result_write(const struct DechistResult *r, const char *dir);

/**
 * # Safety
 * `r` must come from `dechist_scenario_run`, or be null.
 */
void dechist_result_free(struct DechistResult *r);

/**
 * Off-diagonal suppression exponent 2Mγk_BTσ²/ħ². `cgs` selects CGS
 * constants with T in kelvin; otherwise k_B = ħ = 1.
 *
 * # Safety
 * `value` must be a valid pointer.
 */
enum DechistStatus dechist_qbm_suppression_exponent(double mass,
                                                    double gamma,
                                                    double temperature,
                                                    double sigma,
                                                    bool cgs,
                                                    double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DECHIST_H */
