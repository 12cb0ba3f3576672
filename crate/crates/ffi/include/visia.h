#ifndef VISIA_H
#define VISIA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VisiaMode {
  VISIA_MODE_VISIBILITY_AWARE = 0,
  VISIA_MODE_CLEARANCE_ONLY = 1,
} VisiaMode;

/**
 * Status codes returned by every fallible call.
 */
typedef enum VisiaStatus {
  VISIA_STATUS_OK = 0,
  VISIA_STATUS_NULL_POINTER = 1,
  VISIA_STATUS_INVALID_ARGUMENT = 2,
  VISIA_STATUS_PARSE = 3,
  VISIA_STATUS_IO = 4,
  VISIA_STATUS_INTERNAL = 5,
} VisiaStatus;

/**
 * Opaque run result handle.
 */
typedef struct VisiaRun VisiaRun;

/**
 * Opaque scenario handle.
 */
typedef struct VisiaScenario VisiaScenario;

/**
 * Scalar metrics of a finished run. `exit_code` is 0 ok, 2 degraded,
 * 3 timeout.
 */
typedef struct VisiaMetrics {
  double ft;
  double cr;
  double or_;
  double vae;
  double cl_mean;
  double cl_max;
  uint64_t frames;
  uint64_t replans;
  int32_t exit_code;
} VisiaMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread, or an empty string.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *visia_last_error(void);

/**
 * `CR * (100 - OR) / FT` with CR and OR in percent.
 */
double visia_vae(double cr, double or_, double ft);

/**
 * Parses a scenario document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VisiaStatus visia_scenario_from_json(const char *json, struct VisiaScenario **out);

/**
 * Loads one of the built-in scenes by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VisiaStatus visia_scenario_builtin(const char *name, struct VisiaScenario **out);

/**
 * Re-derives the scenario's seeded content with a new seed.
 *
 * # Safety
 * `scenario` must come from this API and not be freed.
 */
enum VisiaStatus visia_scenario_set_seed(struct VisiaScenario *scenario, uint64_t seed);

/**
 * # Safety
 * `scenario` must come from this API; null is ignored.
 */
void visia_scenario_free(struct VisiaScenario *scenario);

/**
 * Flies the scenario closed-loop. `budget_ms <= 0` keeps the default
 * per-call replanning budget.
 *
 * # Safety
 * `scenario` must come from this API and `out` be a valid pointer.
 */
enum VisiaStatus visia_run(const struct VisiaScenario *scenario,
                           enum VisiaMode mode,
                           double budget_ms,
                           struct VisiaRun **out);

/**
 * # Safety
 * `run` must come from this API and `out` be a valid pointer.
 */
enum VisiaStatus visia_run_metrics(const struct VisiaRun *run, struct VisiaMetrics *out);

/**
 * Full run report as a JSON string, released with [`visia_string_free`].
 *
 * # Safety
 * `run` must come from this API and `out` be a valid pointer.
 */
enum VisiaStatus visia_run_report_json(const struct VisiaRun *run, char **out);

/**
 * Frames as CSV (`t,x,y,z,theta,psi,occluded`), released with
 * [`visia_string_free`].
 *
 * # Safety
 * `run` must come from this API and `out` be a valid pointer.
 */
enum VisiaStatus visia_run_frames_csv(const struct VisiaRun *run, char **out);

/**
 * True when the run finished without degradation or timeout.
 *
 * # Safety
 * `run` must come from this API; null yields false.
 */
bool visia_run_ok(const struct VisiaRun *run);

/**
 * # Safety
 * `run` must come from this API; null is ignored.
 */
void visia_run_free(struct VisiaRun *run);

/**
 * # Safety
 * `s` must be a string returned by this API; null is ignored.
 */
void visia_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VISIA_H */
