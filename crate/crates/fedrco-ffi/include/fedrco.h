#ifndef FEDRCO_H
#define FEDRCO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum FedrcoStatus {
  FEDRCO_STATUS_OK = 0,
  /**
   * A pointer argument was null or otherwise unusable.
   */
  FEDRCO_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The configuration failed to parse or validate.
   */
  FEDRCO_STATUS_CONFIG_ERROR = 2,
  /**
   * The run itself failed (I/O, numerics).
   */
  FEDRCO_STATUS_RUNTIME_ERROR = 3,
  /**
   * The audit ran but its suite criterion failed.
   */
  FEDRCO_STATUS_AUDIT_FAILED = 4,
} FedrcoStatus;

/**
 * Per-round metric selector for [`fedrco_run_metric`].
 */
typedef enum FedrcoMetric {
  FEDRCO_METRIC_TEST_ACCURACY = 0,
  FEDRCO_METRIC_TRAIN_LOSS = 1,
  FEDRCO_METRIC_TRAIN_ACCURACY = 2,
  FEDRCO_METRIC_ANOMALY_LOW = 3,
  FEDRCO_METRIC_ANOMALY_HIGH = 4,
  FEDRCO_METRIC_HARD_RESETS = 5,
  FEDRCO_METRIC_INVERSIONS = 6,
  FEDRCO_METRIC_COMM_SCALARS = 7,
} FedrcoMetric;

/**
 * Opaque experiment configuration.
 */
typedef struct FedrcoConfig FedrcoConfig;

/**
 * Opaque finished run: per-round metrics plus the final model accuracy.
 */
typedef struct FedrcoRun FedrcoRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * ABI version of this header/library pair.
 */
uint32_t fedrco_abi_version(void);

/**
 * Message for the most recent error on this thread. The pointer stays valid
 * until the next failing call on the same thread; never free it.
 */
const char *fedrco_last_error(void);

/**
 * Default desk-scale configuration.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one pointer.
 */
enum FedrcoStatus fedrco_config_default(struct FedrcoConfig **out);

/**
 * Parse a JSON configuration document.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer to
 * writable storage for one pointer.
 */
enum FedrcoStatus fedrco_config_parse(const char *json, struct FedrcoConfig **out);

/**
 * Override the configuration's seed.
 *
 * # Safety
 * `cfg` must be a live pointer from a `fedrco_config_*` constructor.
 */
enum FedrcoStatus fedrco_config_set_seed(struct FedrcoConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be a pointer from a `fedrco_config_*` constructor, not yet
 * freed; null is a no-op.
 */
void fedrco_config_free(struct FedrcoConfig *cfg);

/**
 * Run the configured experiment. `out_dir` may be null to skip writing
 * metrics files; when given, metrics.csv / events.csv / config.json are
 * written under it exactly as the CLI does.
 *
 * # Safety
 * `cfg` must be a live config handle; `out_dir`, when non-null, a valid
 * NUL-terminated path; `out` valid storage for one pointer.
 */
enum FedrcoStatus fedrco_run_experiment(const struct FedrcoConfig *cfg,
                                        const char *out_dir,
                                        struct FedrcoRun **out);

/**
 * Number of completed rounds.
 *
 * # Safety
 * `run` must be a live run handle.
 */
size_t fedrco_run_rounds(const struct FedrcoRun *run);

/**
 * Final global test accuracy (NaN for a null handle).
 *
 * # Safety
 * `run` must be a live run handle or null.
 */
double fedrco_run_final_accuracy(const struct FedrcoRun *run);

/**
 * Read one metric of one round into `value`.
 *
 * # Safety
 * `run` must be a live run handle and `value` valid storage for one f64.
 */
enum FedrcoStatus fedrco_run_metric(const struct FedrcoRun *run,
                                    size_t round_index,
                                    enum FedrcoMetric metric,
                                    double *value);

/**
 * # Safety
 * `run` must be a pointer from `fedrco_run_experiment`, not yet freed; null
 * is a no-op.
 */
void fedrco_run_free(struct FedrcoRun *run);

/**
 * Run an audit suite (`rank`, `condition`, `descent`, `drift`, or `all`).
 * On success or on `AuditFailed`, `json_out` (when non-null) receives a
 * newline-separated JSON report allocated by this library; free it with
 * [`fedrco_string_free`].
 *
 * # Safety
 * `suite` must be a valid NUL-terminated string; `json_out` null or valid
 * storage for one pointer.
 */
enum FedrcoStatus fedrco_audit(const char *suite, uint64_t seed, char **json_out);

/**
 * Free a string allocated by this library.
 *
 * # Safety
 * `s` must be a pointer returned via `json_out` from [`fedrco_audit`], not
 * yet freed; null is a no-op.
 */
void fedrco_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDRCO_H */
