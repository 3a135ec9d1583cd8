#ifndef TRANSDUCE_H
#define TRANSDUCE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TransduceStatus {
  TRANSDUCE_STATUS_OK = 0,
  TRANSDUCE_STATUS_NULL_POINTER = 1,
  TRANSDUCE_STATUS_INVALID_UTF8 = 2,
  TRANSDUCE_STATUS_PARSE = 3,
  TRANSDUCE_STATUS_INVALID_CONFIG = 4,
  TRANSDUCE_STATUS_DOMAIN = 5,
  TRANSDUCE_STATUS_NUMERICAL = 6,
  TRANSDUCE_STATUS_UNKNOWN_EXPERIMENT = 7,
  TRANSDUCE_STATUS_IO = 8,
  TRANSDUCE_STATUS_BUFFER_TOO_SMALL = 9,
  TRANSDUCE_STATUS_PANIC = 10,
} TransduceStatus;

/**
 * Parsed configuration.
 */
typedef struct TransduceConfig TransduceConfig;

/**
 * Result of a storage, hold and retrieval simulation.
 */
typedef struct TransduceRun TransduceRun;

typedef struct TransduceEfficiency {
  double eta;
  double eta_t;
  double eta_m;
  double eta_l;
  double eta0;
  double t_dm;
  double t_dl;
  double alpha_m;
  double alpha_l;
} TransduceEfficiency;

typedef struct TransduceNoiseBudget {
  double mean_occupation;
  double flux;
  double stored_photons;
  double thermal_count;
  double stray_count;
  double noise_temperature;
  double noise_temperature_linear;
  bool noise_temperature_flagged;
} TransduceNoiseBudget;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the untruncated message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t transduce_last_error(char *buf, size_t len);

/**
 * Static, NUL-terminated version string.
 */
const char *transduce_version(void);

/**
 * Bundled preset: `"fig2a"` (single-photon storage) or `"fig3"`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TransduceStatus transduce_config_preset(const char *name, struct TransduceConfig **out_cfg);

/**
 * Parses configuration text in the `[section] key = value unit` format.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TransduceStatus transduce_config_parse(const char *source, struct TransduceConfig **out_cfg);

/**
 * Sets a numeric field `section.key` (in the unit already used for it) and
 * revalidates. On failure the handle is unchanged.
 *
 * # Safety
 * `cfg` must come from this library; `path` must be NUL-terminated.
 */
enum TransduceStatus transduce_config_set(struct TransduceConfig *cfg,
                                          const char *path,
                                          double value);

/**
 * # Safety
 * `cfg` must be null or come from this library and not be used afterwards.
 */
void transduce_config_free(struct TransduceConfig *cfg);

/**
 * Efficiency chain of the configuration.
 *
 * # Safety
 * `cfg` must come from this library and `result` must be valid.
 */
enum TransduceStatus transduce_efficiency(const struct TransduceConfig *cfg,
                                          struct TransduceEfficiency *result);

/**
 * Thermal noise budget of the configured scenario.
 *
 * # Safety
 * `cfg` must come from this library and `result` must be valid.
 */
enum TransduceStatus transduce_noise_budget(const struct TransduceConfig *cfg,
                                            struct TransduceNoiseBudget *result);

/**
 * g²(τ) of converted light for `n_bar` input photons, with the configured
 * noise budget, chain efficiency and Lorentzian line.
 *
 * # Safety
 * `cfg` must come from this library and `result` must be valid.
 */
enum TransduceStatus transduce_g2(const struct TransduceConfig *cfg,
                                  double n_bar,
                                  double tau,
                                  double *result);

/**
 * Runs storage, hold and retrieval.
 *
 * # Safety
 * `cfg` must come from this library and `out_run` must be valid.
 */
enum TransduceStatus transduce_simulate(const struct TransduceConfig *cfg,
                                        struct TransduceRun **out_run);

/**
 * Retrieved optical photons per input microwave photon.
 *
 * # Safety
 * `run` must come from this library and `result` must be valid.
 */
enum TransduceStatus transduce_run_efficiency(const struct TransduceRun *run, double *result);

/**
 * Copies retrieval times (s) and output amplitudes into caller buffers of
 * `capacity` entries. `len` always receives the number of samples; when it
 * exceeds `capacity` nothing is copied and `BufferTooSmall` is returned.
 *
 * # Safety
 * `run` must come from this library, `len` must be valid, and `times` and
 * `amplitudes` must be null or hold `capacity` writable doubles.
 */
enum TransduceStatus transduce_run_output(const struct TransduceRun *run,
                                          double *times,
                                          double *amplitudes,
                                          size_t capacity,
                                          size_t *len);

/**
 * # Safety
 * `run` must be null or come from this library and not be used afterwards.
 */
void transduce_run_free(struct TransduceRun *run);

/**
 * Runs a bundled experiment and writes its CSVs into `out_dir`. A null
 * `cfg` selects the experiment's bundled preset. `passed` receives whether
 * every summary row met its tolerance.
 *
 * # Safety
 * `name` and `out_dir` must be NUL-terminated, `cfg` null or from this
 * library, and `passed` valid.
 */
enum TransduceStatus transduce_run_experiment(const char *name,
                                              const struct TransduceConfig *cfg,
                                              uint64_t seed,
                                              const char *out_dir,
                                              bool *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRANSDUCE_H */
