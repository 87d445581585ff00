#ifndef CODEDFL_H
#define CODEDFL_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum CodedflStatus {
  CODEDFL_STATUS_OK = 0,
  CODEDFL_STATUS_NULL_POINTER = 1,
  CODEDFL_STATUS_INVALID_UTF8 = 2,
  CODEDFL_STATUS_CONFIG = 3,
  CODEDFL_STATUS_RUNTIME = 4,
  CODEDFL_STATUS_OUT_OF_RANGE = 5,
  CODEDFL_STATUS_PANIC = 6,
} CodedflStatus;

/**
 * Opaque experiment configuration.
 */
typedef struct CodedflConfig CodedflConfig;

/**
 * Opaque finished run.
 */
typedef struct CodedflRun CodedflRun;

/**
 * One trace row.
 */
typedef struct CodedflEpoch {
  size_t epoch;
  double cumulative_seconds;
  double train_loss;
  double test_accuracy;
  size_t contributors;
} CodedflEpoch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *codedfl_last_error(void);

/**
 * Library version as a static string.
 */
const char *codedfl_version(void);

/**
 * Creates the default configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CodedflStatus codedfl_config_default(struct CodedflConfig **out);

/**
 * Parses and validates a TOML configuration.
 *
 * # Safety
 * `text` must be a nul-terminated string and `out` a valid pointer.
 */
enum CodedflStatus codedfl_config_from_toml(const char *text, struct CodedflConfig **out);

/**
 * Sets the dotted `key` to `value` (parsed as TOML, else a string).
 * The configuration is unchanged when validation fails.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be
 * nul-terminated strings.
 */
enum CodedflStatus codedfl_config_set(struct CodedflConfig *cfg,
                                      const char *key,
                                      const char *value);

/**
 * Serializes the configuration as TOML. Release with
 * [`codedfl_string_free`].
 *
 * # Safety
 * `cfg` must come from this library and `out` must be a valid pointer.
 */
enum CodedflStatus codedfl_config_to_toml(const struct CodedflConfig *cfg, char **out);

/**
 * Writes the 16-digit configuration hash and a nul into `buf`, which
 * must hold at least 17 bytes.
 *
 * # Safety
 * `cfg` must come from this library and `buf` must have `len` bytes.
 */
enum CodedflStatus codedfl_config_hash(const struct CodedflConfig *cfg, char *buf, size_t len);

/**
 * # Safety
 * `cfg` must come from this library or be null; it must not be used
 * afterwards.
 */
void codedfl_config_free(struct CodedflConfig *cfg);

/**
 * Runs the experiment.
 *
 * # Safety
 * `cfg` must come from this library and `out` must be a valid pointer.
 */
enum CodedflStatus codedfl_run(const struct CodedflConfig *cfg, struct CodedflRun **out);

/**
 * Number of trace rows; 0 for a null handle.
 *
 * # Safety
 * `run` must come from this library or be null.
 */
size_t codedfl_run_len(const struct CodedflRun *run);

/**
 * Copies trace row `index` into `out`.
 *
 * # Safety
 * `run` must come from this library and `out` must be a valid pointer.
 */
enum CodedflStatus codedfl_run_epoch(const struct CodedflRun *run,
                                     size_t index,
                                     struct CodedflEpoch *out);

/**
 * First cumulative time at which the test accuracy reaches `target`.
 * `*reached` is set to false, and `*seconds` left alone, if it never does.
 *
 * # Safety
 * `run` must come from this library; `seconds` and `reached` must be
 * valid pointers.
 */
enum CodedflStatus codedfl_run_time_to_accuracy(const struct CodedflRun *run,
                                                double target,
                                                double *seconds,
                                                bool *reached);

/**
 * Writes `trace.csv` and `summary.json` into `dir`.
 *
 * # Safety
 * `run` must come from this library and `dir` must be a nul-terminated
 * string.
 */
enum CodedflStatus codedfl_run_write(const struct CodedflRun *run, const char *dir);

/**
 * # Safety
 * `run` must come from this library or be null; it must not be used
 * afterwards.
 */
void codedfl_run_free(struct CodedflRun *run);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library or be null.
 */
void codedfl_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CODEDFL_H */
