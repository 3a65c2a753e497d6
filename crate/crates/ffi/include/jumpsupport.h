#ifndef JUMPSUPPORT_H
#define JUMPSUPPORT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible entry point.
typedef enum JsStatus {
  JS_STATUS_OK = 0,
  JS_STATUS_NULL_POINTER = 1,
  JS_STATUS_INVALID_UTF8 = 2,
  JS_STATUS_CONFIG = 3,
  JS_STATUS_MODEL = 4,
  JS_STATUS_NUMERIC = 5,
  JS_STATUS_LOW_ACCEPTANCE = 6,
  JS_STATUS_IO = 7,
  JS_STATUS_PARSE = 8,
  JS_STATUS_INVALID_ARGUMENT = 9,
  JS_STATUS_PANIC = 10,
} JsStatus;

// The result of running a scenario.
typedef struct JsReport JsReport;

// A parsed scenario configuration.
typedef struct JsScenario JsScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failing call on this thread, or null if none.
// The pointer stays valid until the next failing call on the same thread.
const char *js_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *js_version(void);

// Parses a JSON scenario document.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid pointer.
enum JsStatus js_scenario_from_json(const char *json, struct JsScenario **out);

// Loads a scenario from a file path or a bundled scenario name.
//
// # Safety
// `spec` must be a valid NUL-terminated string and `out` a valid pointer.
enum JsStatus js_scenario_load(const char *spec, struct JsScenario **out);

// Overrides the path count. Zero is rejected.
//
// # Safety
// `scenario` must be a live handle or null.
enum JsStatus js_scenario_set_paths(struct JsScenario *scenario, size_t n_paths);

// Overrides the master seed.
//
// # Safety
// `scenario` must be a live handle or null.
enum JsStatus js_scenario_set_seed(struct JsScenario *scenario, uint64_t seed);

// Sets the worker count; 0 uses all cores. Results do not depend on it.
//
// # Safety
// `scenario` must be a live handle or null.
enum JsStatus js_scenario_set_threads(struct JsScenario *scenario, size_t threads);

// Releases a scenario. Null is ignored.
//
// # Safety
// `scenario` must come from this library and not be used afterwards.
void js_scenario_free(struct JsScenario *scenario);

// Runs the scenario's experiment.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum JsStatus js_run(const struct JsScenario *scenario, struct JsReport **out);

// 1 if every verdict passed, 0 if one failed, -1 for a null handle.
//
// # Safety
// `report` must be a live handle or null.
int32_t js_report_passed(const struct JsReport *report);

// The deterministic report as JSON, owned by the handle.
//
// # Safety
// `report` must be a live handle or null.
const char *js_report_json(const struct JsReport *report);

// Writes the report, summary, timing and artifacts into `dir`.
//
// # Safety
// `report` must be a live handle and `dir` a valid NUL-terminated string.
enum JsStatus js_report_write(const struct JsReport *report, const char *dir);

// Releases a report. Null is ignored.
//
// # Safety
// `report` must come from this library and not be used afterwards.
void js_report_free(struct JsReport *report);

// Two-sided Clopper–Pearson interval at level `1 - alpha`.
//
// # Safety
// `lower` and `upper` must be valid pointers.
enum JsStatus js_clopper_pearson(uint64_t hits,
                                 uint64_t trials,
                                 double alpha,
                                 double *lower,
                                 double *upper);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JUMPSUPPORT_H */
