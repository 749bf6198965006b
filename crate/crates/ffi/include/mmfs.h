#ifndef MMFS_H
#define MMFS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Parameter preset for [`mmfs_run`].
 */
typedef enum MmfsPreset {
  MMFS_PRESET_PAPER = 0,
  MMFS_PRESET_DESK = 1,
} MmfsPreset;

/**
 * Result of every fallible call.
 */
typedef enum MmfsStatus {
  MMFS_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  MMFS_STATUS_NULL_POINTER = 1,
  MMFS_STATUS_INVALID_ARGUMENT = 2,
  MMFS_STATUS_CONFIG = 3,
  MMFS_STATUS_DATA = 4,
  MMFS_STATUS_RUNTIME = 5,
  /**
   * A Rust panic was caught; the handle arguments may be unusable.
   */
  MMFS_STATUS_PANIC = 6,
} MmfsStatus;

/**
 * Benchmark variant for [`mmfs_dataset_synthetic`] and [`mmfs_bayes_error`].
 */
typedef enum MmfsTask {
  MMFS_TASK_BINARY = 0,
  MMFS_TASK_FOUR_CLASS = 1,
} MmfsTask;

/**
 * Opaque multi-view dataset.
 */
typedef struct MmfsDataset MmfsDataset;

/**
 * Opaque outcome of a search run.
 */
typedef struct MmfsRunResult MmfsRunResult;

/**
 * Test-set metrics. Sensitivity and specificity are NaN for multiclass data.
 */
typedef struct MmfsMetrics {
  double balanced_accuracy;
  double auc;
  double sensitivity;
  double specificity;
  size_t n_selected;
} MmfsMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mmfs_version(void);

/**
 * Message of the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next library call on this thread.
 */
const char *mmfs_last_error(void);

/**
 * Generates the training and test set of one synthetic benchmark replicate.
 * `view_dim` is the number of columns per view (500 in the benchmark) and
 * `samples_per_class` the size of each class (100).
 *
 * # Safety
 * `train_out` and `test_out` must be valid pointers to writable handles.
 */
enum MmfsStatus mmfs_dataset_synthetic(enum MmfsTask task,
                                       size_t view_dim,
                                       size_t samples_per_class,
                                       uint64_t seed,
                                       struct MmfsDataset **train_out,
                                       struct MmfsDataset **test_out);

/**
 * Loads a dataset from a TOML manifest of per-view CSV files.
 *
 * # Safety
 * `manifest_path` must be a NUL-terminated string; `out` a writable handle.
 */
enum MmfsStatus mmfs_dataset_load(const char *manifest_path, struct MmfsDataset **out);

/**
 * Releases a dataset. Null is ignored.
 *
 * # Safety
 * `ds` must come from this library and not be used afterwards.
 */
void mmfs_dataset_free(struct MmfsDataset *ds);

/**
 * Writes sample, view, feature and class counts. Any output may be null.
 *
 * # Safety
 * `ds` must be a live handle; non-null outputs must be writable.
 */
enum MmfsStatus mmfs_dataset_shape(const struct MmfsDataset *ds,
                                   size_t *n_samples,
                                   size_t *n_views,
                                   size_t *n_features,
                                   size_t *n_classes);

/**
 * Number of features of view `view` (0-based).
 *
 * # Safety
 * `ds` must be a live handle and `out` writable.
 */
enum MmfsStatus mmfs_dataset_view_size(const struct MmfsDataset *ds, size_t view, size_t *out);

/**
 * Ground-truth informative features, when the dataset carries them.
 * Fails with `Data` otherwise.
 *
 * # Safety
 * `mask` must point to `len` writable bytes, `len` = feature count.
 */
enum MmfsStatus mmfs_dataset_informative_mask(const struct MmfsDataset *ds,
                                              uint8_t *mask,
                                              size_t len);

/**
 * Runs the full search. `threads` = 0 uses every core.
 *
 * # Safety
 * `ds` must be a live handle and `out` a writable handle pointer.
 */
enum MmfsStatus mmfs_run(const struct MmfsDataset *ds,
                         enum MmfsPreset preset,
                         uint64_t seed,
                         size_t threads,
                         struct MmfsRunResult **out);

/**
 * Releases a run result. Null is ignored.
 *
 * # Safety
 * `r` must come from [`mmfs_run`] and not be used afterwards.
 */
void mmfs_run_free(struct MmfsRunResult *r);

/**
 * Copies the selected global mask into `mask` (`len` = feature count).
 *
 * # Safety
 * `r` must be a live handle; `mask` must hold `len` writable bytes.
 */
enum MmfsStatus mmfs_run_mask(const struct MmfsRunResult *r, uint8_t *mask, size_t len);

/**
 * Cross-validated error and feature count of the selected mask, and the
 * niche it came from. Any output may be null.
 *
 * # Safety
 * `r` must be a live handle; non-null outputs must be writable.
 */
enum MmfsStatus mmfs_run_fitness(const struct MmfsRunResult *r,
                                 double *cv_error,
                                 size_t *n_features,
                                 size_t *niche);

/**
 * 10-fold stratified cross-validated balanced error of a mask, with the
 * fold plan drawn from `seed`.
 *
 * # Safety
 * `ds` must be a live handle, `mask` must hold `len` bytes, `out` writable.
 */
enum MmfsStatus mmfs_cv_error(const struct MmfsDataset *ds,
                              const uint8_t *mask,
                              size_t len,
                              uint64_t seed,
                              double *out);

/**
 * Trains on `train` restricted to the mask and scores on `test`.
 *
 * # Safety
 * Both handles must be live, `mask` must hold `len` bytes, `out` writable.
 */
enum MmfsStatus mmfs_evaluate(const struct MmfsDataset *train,
                              const struct MmfsDataset *test,
                              const uint8_t *mask,
                              size_t len,
                              struct MmfsMetrics *out);

/**
 * Monte Carlo Bayes error of the benchmark using the informative features
 * of `views` (0-based view indices).
 *
 * # Safety
 * `views` must hold `n_views` entries; outputs may be null.
 */
enum MmfsStatus mmfs_bayes_error(enum MmfsTask task,
                                 const size_t *views,
                                 size_t n_views,
                                 size_t n_samples,
                                 uint64_t seed,
                                 double *value,
                                 double *std_error);

/**
 * Mean per-class recall of integer labels.
 *
 * # Safety
 * Both label arrays must hold `n` entries; `out` must be writable.
 */
enum MmfsStatus mmfs_balanced_accuracy(const size_t *y_true,
                                       const size_t *y_pred,
                                       size_t n,
                                       double *out);

/**
 * Rank-statistic AUC; `labels` nonzero marks positives.
 *
 * # Safety
 * `labels` and `scores` must hold `n` entries; `out` must be writable.
 */
enum MmfsStatus mmfs_auc(const uint8_t *labels, const double *scores, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MMFS_H */
