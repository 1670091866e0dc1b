#ifndef TANDEM_FUSION_H
#define TANDEM_FUSION_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TfStatus {
  TF_STATUS_OK = 0,
  TF_STATUS_NULL_POINTER = 1,
  TF_STATUS_INVALID_ARGUMENT = 2,
  TF_STATUS_ORDERING = 3,
  TF_STATUS_NON_CONVERGENCE = 4,
  TF_STATUS_BRACKET = 5,
  TF_STATUS_CAP_EXCEEDED = 6,
  TF_STATUS_PANIC = 7,
} TfStatus;

/**
 * Opaque two-sensor model.
 */
typedef struct TfModel TfModel;

typedef struct TfYxThresholds {
  double t_v;
  double t_w[2];
} TfYxThresholds;

typedef struct TfOperatingPoint {
  double pf;
  double pd;
  double lambda;
} TfOperatingPoint;

/**
 * `t_w[v][u]`.
 */
typedef struct TfXyxThresholds {
  double t_u;
  double t_v[2];
  double t_w[2][2];
} TfXyxThresholds;

typedef struct TfRates {
  double pf;
  double pd;
} TfRates;

typedef struct TfEstimate {
  double value;
  double half_width;
  uint64_t trials;
  uint64_t seed;
} TfEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Create a model with noise deviations `sigma_x`, `sigma_y`.
 *
 * # Safety
 * `out` must be null or valid for one pointer write.
 */
enum TfStatus tf_model_new(double sigma_x, double sigma_y, struct TfModel **out);

/**
 * Release a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or come from `tf_model_new` and not be freed twice.
 */
void tf_model_free(struct TfModel *model);

/**
 * Gaussian tail `Q(z) = P(N(0,1) > z)`.
 */
double tf_q_tail(double z);

/**
 * Neyman-Pearson optimal one-way design at false-alarm rate `alpha`.
 *
 * # Safety
 * Pointers must be null or valid.
 */
enum TfStatus tf_optimize_yx(const struct TfModel *model,
                             double alpha,
                             struct TfYxThresholds *thresholds,
                             struct TfOperatingPoint *op);

/**
 * Neyman-Pearson optimal interactive design at false-alarm rate `alpha`.
 *
 * # Safety
 * Pointers must be null or valid.
 */
enum TfStatus tf_optimize_xyx(const struct TfModel *model,
                              double alpha,
                              struct TfXyxThresholds *thresholds,
                              struct TfOperatingPoint *op);

/**
 * Centralized detector with both observations at one site.
 *
 * # Safety
 * Pointers must be null or valid.
 */
enum TfStatus tf_centralized(const struct TfModel *model,
                             double alpha,
                             struct TfOperatingPoint *op);

/**
 * Largest KL exponents of the one-way and interactive processes and the
 * maximizing Y threshold of the one-way process.
 *
 * # Safety
 * Pointers must be null or valid.
 */
enum TfStatus tf_kl_max(const struct TfModel *model, double *k_yx, double *k_xyx, double *t_star);

/**
 * # Safety
 * Pointers must be null or valid.
 */
enum TfStatus tf_evaluate_yx(const struct TfModel *model,
                             const struct TfYxThresholds *thresholds,
                             struct TfRates *out);

/**
 * # Safety
 * Pointers must be null or valid.
 */
enum TfStatus tf_evaluate_xyx(const struct TfModel *model,
                              const struct TfXyxThresholds *thresholds,
                              struct TfRates *out);

/**
 * Monte-Carlo `(pf, pd)` of a one-way design.
 *
 * # Safety
 * Pointers must be null or valid.
 */
enum TfStatus tf_simulate_yx(const struct TfModel *model,
                             const struct TfYxThresholds *thresholds,
                             uint64_t trials,
                             uint64_t seed,
                             struct TfEstimate *pf,
                             struct TfEstimate *pd);

/**
 * Monte-Carlo `(pf, pd)` of an interactive design.
 *
 * # Safety
 * Pointers must be null or valid.
 */
enum TfStatus tf_simulate_xyx(const struct TfModel *model,
                              const struct TfXyxThresholds *thresholds,
                              uint64_t trials,
                              uint64_t seed,
                              struct TfEstimate *pf,
                              struct TfEstimate *pd);

/**
 * Message of the last failed call on this thread, empty after a success.
 * Valid until the next call on the same thread.
 */
const char *tf_last_error_message(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *tf_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TANDEM_FUSION_H */
