#ifndef CASEWORK_H
#define CASEWORK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Interventions in report order.
 */
typedef enum CwIntervention {
  CW_INTERVENTION_ES = 0,
  CW_INTERVENTION_TH = 1,
  CW_INTERVENTION_RRH = 2,
  CW_INTERVENTION_PREV = 3,
} CwIntervention;

typedef enum CwStatus {
  CW_STATUS_OK = 0,
  CW_STATUS_NULL_POINTER = 1,
  CW_STATUS_INVALID_UTF8 = 2,
  CW_STATUS_INVALID_ARGUMENT = 3,
  CW_STATUS_CONFIG_ERROR = 4,
  CW_STATUS_DATA_ERROR = 5,
  CW_STATUS_INTERNAL_ERROR = 6,
  CW_STATUS_PANIC = 7,
} CwStatus;

/**
 * Household records with their one-hot encoding.
 */
typedef struct CwDataset CwDataset;

typedef struct CwTree CwTree;

typedef struct CwAucEstimate {
  double auc;
  double variance;
  double ci_low;
  double ci_high;
} CwAucEstimate;

typedef struct CwResampleResult {
  double observed_mean;
  double null_mean;
  double null_sd;
  double percentile;
  double p_two_sided;
} CwResampleResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null. Valid until the next call
 * into the library from the same thread.
 */
const char *cw_last_error_message(void);

/**
 * Loads a household CSV with the built-in schema.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CwStatus cw_dataset_load_csv(const char *path, struct CwDataset **out);

/**
 * Generates a synthetic dataset from a JSON generator config.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 */
enum CwStatus cw_dataset_generate(const char *config_json, struct CwDataset **out);

/**
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t cw_dataset_n_rows(const struct CwDataset *ds);

/**
 * Number of encoded feature columns.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t cw_dataset_n_cols(const struct CwDataset *ds);

/**
 * Writes 0/1 one-vs-all labels for `target` into `labels[0..len]`;
 * `len` must equal the row count.
 *
 * # Safety
 * `ds` must be a live handle and `labels` must hold `len` bytes.
 */
enum CwStatus cw_dataset_labels(const struct CwDataset *ds,
                                enum CwIntervention target,
                                uint8_t *labels,
                                size_t len);

/**
 * Vulnerability score of every record.
 *
 * # Safety
 * `ds` must be a live handle and `scores` must hold `len` values.
 */
enum CwStatus cw_dataset_vulnerability(const struct CwDataset *ds, uint32_t *scores, size_t len);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void cw_dataset_free(struct CwDataset *ds);

/**
 * Fits a short explainable tree for `target` on the whole dataset.
 * `max_depth` of 0 keeps the default cap of four.
 *
 * # Safety
 * `ds` must be a live handle; `out` must be writable.
 */
enum CwStatus cw_tree_fit_short(const struct CwDataset *ds,
                                enum CwIntervention target,
                                size_t max_depth,
                                uint64_t seed,
                                struct CwTree **out);

/**
 * # Safety
 * `tree` must be null or a live handle.
 */
size_t cw_tree_depth(const struct CwTree *tree);

/**
 * Positive-class probability for every row of `ds`.
 *
 * # Safety
 * Handles must be live; `scores` must hold `len` values.
 */
enum CwStatus cw_tree_predict(const struct CwTree *tree,
                              const struct CwDataset *ds,
                              double *scores,
                              size_t len);

/**
 * Tree as JSON; release with `cw_string_free`.
 *
 * # Safety
 * `tree` must be a live handle; `out` must be writable.
 */
enum CwStatus cw_tree_to_json(const struct CwTree *tree, char **out);

/**
 * # Safety
 * `tree` must be null or a handle not yet freed.
 */
void cw_tree_free(struct CwTree *tree);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void cw_string_free(char *s);

/**
 * Area under the ROC curve, ties counting one half.
 *
 * # Safety
 * `scores` and `labels` must hold `n` values; `out` must be writable.
 */
enum CwStatus cw_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * AUC with a DeLong confidence interval at `level`.
 *
 * # Safety
 * `scores` and `labels` must hold `n` values; `out` must be writable.
 */
enum CwStatus cw_delong_ci(const double *scores,
                           const uint8_t *labels,
                           size_t n,
                           double level,
                           struct CwAucEstimate *out);

/**
 * Resampling test of the mean of `population[observed]` against
 * `n_resamples` random same-size groups.
 *
 * # Safety
 * `population` must hold `n` values, `observed` `k` indices; `out` must be
 * writable.
 */
enum CwStatus cw_resample_test(const double *population,
                               size_t n,
                               const size_t *observed,
                               size_t k,
                               size_t n_resamples,
                               uint64_t seed,
                               bool exclude_observed,
                               struct CwResampleResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CASEWORK_H */
