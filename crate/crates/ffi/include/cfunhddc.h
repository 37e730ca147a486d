#ifndef CFUNHDDC_H
#define CFUNHDDC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum CfhStatus {
  CFH_STATUS_OK = 0,
  CFH_STATUS_NULL_POINTER = 1,
  CFH_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Basis construction or smoothing failed.
   */
  CFH_STATUS_BASIS = 3,
  /**
   * A numerical failure or degenerate cluster during fitting.
   */
  CFH_STATUS_NUMERIC = 4,
  /**
   * Model selection or dimension error.
   */
  CFH_STATUS_SELECTION = 5,
  CFH_STATUS_IO = 6,
  CFH_STATUS_PANIC = 7,
} CfhStatus;

/**
 * Simulated dataset families for [`cfh_simulate`].
 */
typedef enum CfhDataset {
  CFH_DATASET_DATASET1 = 0,
  CFH_DATASET_DATASET2 = 1,
  CFH_DATASET_NORMAL_ONLY = 2,
} CfhDataset;

/**
 * A B-spline basis for every component.
 */
typedef struct CfhBasis CfhBasis;

/**
 * A set of multivariate curves.
 */
typedef struct CfhCurves CfhCurves;

/**
 * A fitted model with its classification.
 */
typedef struct CfhFit CfhFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cfh_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next library call on the same thread.
 */
const char *cfh_last_error_message(void);

/**
 * Simulates one of the benchmark datasets with its default composition.
 *
 * # Safety
 * `out` must be a valid pointer to write the new handle to.
 */
enum CfhStatus cfh_simulate(enum CfhDataset kind, uint64_t seed, struct CfhCurves **out);

/**
 * Builds curves observed on one shared grid of `n_times` points.
 * `values` holds `n_curves * n_components * n_times` numbers, curve-major,
 * then component, then time.
 *
 * # Safety
 * `times` and `values` must point to arrays of the stated lengths and `out`
 * must be writable.
 */
enum CfhStatus cfh_curves_from_grid(size_t n_curves,
                                    size_t n_components,
                                    size_t n_times,
                                    const double *times,
                                    const double *values,
                                    struct CfhCurves **out);

/**
 * Number of curves, or 0 for a null handle.
 *
 * # Safety
 * `curves` must be null or a live handle.
 */
size_t cfh_curves_len(const struct CfhCurves *curves);

/**
 * # Safety
 * `curves` must be null or a handle not freed before.
 */
void cfh_curves_free(struct CfhCurves *curves);

/**
 * Clamped B-spline basis with `size` functions of `degree` per component,
 * on the domain of `curves`.
 *
 * # Safety
 * `curves` must be a live handle and `out` writable.
 */
enum CfhStatus cfh_basis_new(const struct CfhCurves *curves,
                             size_t size,
                             size_t degree,
                             struct CfhBasis **out);

/**
 * # Safety
 * `basis` must be null or a handle not freed before.
 */
void cfh_basis_free(struct CfhBasis *basis);

/**
 * Smooths `curves` on `basis` and fits `k` clusters of common dimension `d`,
 * keeping the best of `nb_init` trimmed k-means starts.
 *
 * # Safety
 * `curves` and `basis` must be live handles and `out` writable.
 */
enum CfhStatus cfh_fit(const struct CfhCurves *curves,
                       const struct CfhBasis *basis,
                       size_t k,
                       size_t d,
                       size_t nb_init,
                       uint64_t seed,
                       struct CfhFit **out);

/**
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t cfh_fit_n_clusters(const struct CfhFit *fit);

/**
 * Observed log-likelihood; NaN for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
double cfh_fit_loglik(const struct CfhFit *fit);

/**
 * BIC (larger is better); NaN for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
double cfh_fit_bic(const struct CfhFit *fit);

/**
 * Copies the 0-based cluster labels into `labels`, which must hold exactly
 * as many entries as there are curves.
 *
 * # Safety
 * `fit` must be a live handle and `labels` writable for `len` entries.
 */
enum CfhStatus cfh_fit_labels(const struct CfhFit *fit, size_t *labels, size_t len);

/**
 * Copies the outlier flags (1 = outlier) into `flags`.
 *
 * # Safety
 * `fit` must be a live handle and `flags` writable for `len` entries.
 */
enum CfhStatus cfh_fit_outliers(const struct CfhFit *fit, uint8_t *flags, size_t len);

/**
 * # Safety
 * `fit` must be null or a handle not freed before.
 */
void cfh_fit_free(struct CfhFit *fit);

/**
 * Free-parameter count of a model with `k` clusters in a basis of size `b`
 * with intrinsic dimensions `dims[0..k]`.
 *
 * # Safety
 * `dims` must hold `k` entries and `out` be writable.
 */
enum CfhStatus cfh_count_parameters(size_t k, size_t b, const size_t *dims, uint64_t *out);

/**
 * Adjusted Rand index between two labelings of `n` points.
 *
 * # Safety
 * `a` and `b` must hold `n` entries and `out` be writable.
 */
enum CfhStatus cfh_ari(const int64_t *a, const int64_t *b, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CFUNHDDC_H */
