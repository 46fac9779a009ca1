#ifndef EMPROC_H
#define EMPROC_H

#include <stddef.h>
#include <stdint.h>

// Result codes.
typedef enum EmprocStatus {
  EMPROC_STATUS_OK = 0,
  EMPROC_STATUS_NULL_POINTER = 1,
  EMPROC_STATUS_INVALID_UTF8 = 2,
  // Invalid model, weights or arguments.
  EMPROC_STATUS_CONFIG = 3,
  // Argument outside the domain of the operation.
  EMPROC_STATUS_DOMAIN = 4,
  // Tied values in a sample column.
  EMPROC_STATUS_TIE = 5,
  // Quadrature failure or violated invariant.
  EMPROC_STATUS_NUMERICAL = 6,
  EMPROC_STATUS_PANIC = 7,
} EmprocStatus;

// Opaque model handle; owns the oracle for the model.
typedef struct EmprocModel EmprocModel;

// Opaque weight-family handle.
typedef struct EmprocWeights EmprocWeights;

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *emproc_last_error(void);

// Library version as a static NUL-terminated string.
const char *emproc_version(void);

// Builds a model from the body of a `[model]` block, e.g.
// `kind = "stationary_ou"\nrho = 1.0`.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be writable.
enum EmprocStatus emproc_model_new(const char *toml, struct EmprocModel **out);

// # Safety
// `model` must come from [`emproc_model_new`] and not be used afterwards. NULL is ignored.
void emproc_model_free(struct EmprocModel *model);

// Builds a weight family from the body of a `[weights]` block, e.g.
// `q = { kind = "constant", value = 1.0 }`.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be writable.
enum EmprocStatus emproc_weights_new(const char *toml, struct EmprocWeights **out);

// # Safety
// `weights` must come from [`emproc_weights_new`] and not be used afterwards. NULL is ignored.
void emproc_weights_free(struct EmprocWeights *weights);

// G_t(x).
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum EmprocStatus emproc_marginal_cdf(const struct EmprocModel *model,
                                      double t,
                                      double x,
                                      double *out);

// G_t⁻¹(p) for p in (0, 1).
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum EmprocStatus emproc_marginal_quantile(const struct EmprocModel *model,
                                           double t,
                                           double p,
                                           double *out);

// P(G_t(Y(t)) ≤ u, G_s(Y(s)) ≤ v).
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum EmprocStatus emproc_joint_cdf(const struct EmprocModel *model,
                                   double t,
                                   double s,
                                   double u,
                                   double v,
                                   double *out);

// β_n on a sample of `n` paths observed at `m` increasing times.
// `values` is row-major n × m: `values[j * m + i]` = Y_j(t_i). Writes `m`
// values to `out`.
//
// # Safety
// `values` must hold n·m doubles, `times` m doubles and `out` room for m doubles.
enum EmprocStatus emproc_beta_n(const struct EmprocModel *model,
                                const struct EmprocWeights *weights,
                                const double *values,
                                uintptr_t n,
                                const double *times,
                                uintptr_t m,
                                double *out);

// Limit covariance Γ₁(t, s) of β_n.
//
// # Safety
// Handles must be live; `out` must be writable.
enum EmprocStatus emproc_gamma1(const struct EmprocModel *model,
                                const struct EmprocWeights *weights,
                                double t,
                                double s,
                                double *out);

// Limit mean E β*_n(t) = ∫q dG − ∫q G dG.
//
// # Safety
// Handles must be live; `out` must be writable.
enum EmprocStatus emproc_mean_limit(const struct EmprocModel *model,
                                    const struct EmprocWeights *weights,
                                    double t,
                                    double *out);

#endif  /* EMPROC_H */
