#ifndef ANCHORLVM_H
#define ANCHORLVM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. 2-5 match the command-line exit codes.
 */
typedef enum AlvmStatus {
  ALVM_STATUS_OK = 0,
  ALVM_STATUS_CONFIG = 2,
  ALVM_STATUS_DATA = 3,
  ALVM_STATUS_IDENTIFICATION = 4,
  ALVM_STATUS_INFERENCE = 5,
  ALVM_STATUS_NULL_ARGUMENT = 10,
  ALVM_STATUS_INVALID_UTF8 = 11,
  ALVM_STATUS_PANIC = 12,
} AlvmStatus;

/**
 * Opaque fitted model.
 */
typedef struct AlvmModel AlvmModel;

typedef struct AlvmPosterior {
  double raw;
  double clamped;
  double evidence_probability;
} AlvmPosterior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into the library on this thread.
 */
const char *alvm_last_error(void);

/**
 * Parses a model document.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum AlvmStatus alvm_model_from_json(const char *json, struct AlvmModel **out);

/**
 * Reads a model document from `path`.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum AlvmStatus alvm_model_load(const char *path, struct AlvmModel **out);

/**
 * Runs the fit pipeline described by a fit configuration file. Nothing is
 * written to disk.
 *
 * # Safety
 * `config_path` must be a nul-terminated string; `out` must be writable.
 */
enum AlvmStatus alvm_fit(const char *config_path, struct AlvmModel **out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards. Null is
 * ignored.
 */
void alvm_model_free(struct AlvmModel *model);

/**
 * # Safety
 * `s` must come from this library. Null is ignored.
 */
void alvm_string_free(char *s);

/**
 * Nodes in declaration order, including the latent node.
 *
 * # Safety
 * `model` must be a live model or null (returns 0).
 */
uintptr_t alvm_model_node_count(const struct AlvmModel *model);

/**
 * Name of node `index`; release with [`alvm_string_free`].
 *
 * # Safety
 * `model` must be a live model; `out` must be writable.
 */
enum AlvmStatus alvm_model_node_name(const struct AlvmModel *model, uintptr_t index, char **out);

/**
 * Serializes the model document.
 *
 * # Safety
 * `model` must be a live model; `out` must be writable.
 */
enum AlvmStatus alvm_model_to_json(const struct AlvmModel *model, char **out);

/**
 * `P(V=1 | evidence)` with evidence as a JSON object `{"name": 0|1, ...}`.
 *
 * # Safety
 * `model` must be a live model, `evidence_json` a nul-terminated string and
 * `out` writable.
 */
enum AlvmStatus alvm_posterior(const struct AlvmModel *model,
                               const char *evidence_json,
                               struct AlvmPosterior *out);

/**
 * As [`alvm_posterior`] with evidence given as parallel arrays of node
 * indices and 0/1 values.
 *
 * # Safety
 * `nodes` and `values` must each hold `len` elements (or be null when
 * `len` is 0); `out` must be writable.
 */
enum AlvmStatus alvm_posterior_indexed(const struct AlvmModel *model,
                                       const uintptr_t *nodes,
                                       const uint8_t *values,
                                       uintptr_t len,
                                       struct AlvmPosterior *out);

/**
 * Internal-structure report as JSON. `probes_json` is a probes document
 * `{"probes": [...]}` or null.
 *
 * # Safety
 * `model` must be a live model, `probes_json` null or a nul-terminated
 * string, `out` writable.
 */
enum AlvmStatus alvm_report_json(const struct AlvmModel *model,
                                 const char *probes_json,
                                 char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANCHORLVM_H */
