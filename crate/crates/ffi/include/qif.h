#ifndef QIF_H
#define QIF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QifStatus {
  QIF_STATUS_OK = 0,
  QIF_STATUS_NULL_POINTER = 1,
  QIF_STATUS_INVALID_ARGUMENT = 2,
  QIF_STATUS_INVALID_DATA = 3,
  QIF_STATUS_INVALID_SUBGROUP = 4,
  QIF_STATUS_NUMERICAL = 5,
  QIF_STATUS_NON_CONVERGENCE = 6,
  QIF_STATUS_IO = 7,
  QIF_STATUS_PANIC = 8,
} QifStatus;

typedef enum QifLink {
  QIF_LINK_IDENTITY = 0,
  QIF_LINK_LOGIT = 1,
} QifLink;

typedef enum QifWorking {
  QIF_WORKING_INDEPENDENCE = 0,
  QIF_WORKING_COMPOUND_SYMMETRY = 1,
  QIF_WORKING_AR1 = 2,
} QifWorking;

// A subgroup partition with its mean vectors.
typedef struct QifAux QifAux;

// A balanced panel.
typedef struct QifDataset QifDataset;

// The outcome of [`qif_fit`].
typedef struct QifFit QifFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call into the library from this thread.
const char *qif_last_error_message(void);

// Builds a dataset from flat arrays. `response` holds `n*q` values, subject
// by subject; `covariates` holds `n*q*p` values, subject by subject and
// time point by time point.
//
// # Safety
// Pointers must reference arrays of the stated lengths; `out` must be writable.
enum QifStatus qif_dataset_new(size_t n,
                               size_t q,
                               size_t p,
                               const double *response,
                               const double *covariates,
                               struct QifDataset **out);

// Reads a long-format CSV file; `dropped` (nullable) receives the number of
// incomplete subjects removed.
//
// # Safety
// Strings must be NUL-terminated; `covariates` must hold `n_covariates` strings.
enum QifStatus qif_dataset_load_csv(const char *path,
                                    const char *id,
                                    const char *time,
                                    const char *response,
                                    const char *const *covariates,
                                    size_t n_covariates,
                                    size_t *dropped,
                                    struct QifDataset **out);

// # Safety
// `ds` must be a live handle; the outputs may be null.
enum QifStatus qif_dataset_dims(const struct QifDataset *ds, size_t *n, size_t *q, size_t *p);

// # Safety
// `ds` must come from this library and not be used afterwards. Null is a no-op.
void qif_dataset_free(struct QifDataset *ds);

// Parses subgroup definitions, one per line. When `phi` is null the means
// must be written inline after `=>`; otherwise `phi` holds `K*q` values,
// group by group, and inline means are ignored.
//
// # Safety
// `text` must be NUL-terminated; `phi` must hold `phi_len` values.
enum QifStatus qif_aux_parse(const char *text,
                             const double *phi,
                             size_t phi_len,
                             struct QifAux **out);

// # Safety
// `aux` must come from this library and not be used afterwards. Null is a no-op.
void qif_aux_free(struct QifAux *aux);

// Fits the model; a null `aux` gives plain QIF. `link` and `working` take
// [`QifLink`] and [`QifWorking`] values. A fit that stops at the
// iteration cap is still returned; check [`qif_fit_converged`].
//
// # Safety
// `ds` must be live, `aux` live or null, `out` writable.
enum QifStatus qif_fit(const struct QifDataset *ds,
                       int link,
                       int working,
                       const struct QifAux *aux,
                       int two_step,
                       struct QifFit **out);

// Number of coefficients, or 0 for a null handle.
//
// # Safety
// `f` must be live or null.
size_t qif_fit_p(const struct QifFit *f);

// Copies `β̂` into `out[0..len]`; `len` must be at least `p`.
//
// # Safety
// `f` must be live and `out` must hold `len` values.
enum QifStatus qif_fit_beta(const struct QifFit *f, double *out, size_t len);

// Copies the `p × p` covariance of `β̂` row by row.
//
// # Safety
// `f` must be live and `out` must hold `len` values.
enum QifStatus qif_fit_covariance(const struct QifFit *f, double *out, size_t len);

// `Q_n(β̂)`, NaN for a null handle.
//
// # Safety
// `f` must be live or null.
double qif_fit_objective(const struct QifFit *f);

// 1 when the solver met its tolerances, 0 otherwise or for a null handle.
//
// # Safety
// `f` must be live or null.
int qif_fit_converged(const struct QifFit *f);

// # Safety
// `f` must be live or null.
size_t qif_fit_iterations(const struct QifFit *f);

// # Safety
// `f` must come from this library and not be used afterwards. Null is a no-op.
void qif_fit_free(struct QifFit *f);

// Profile test of `β[indices[j]] = values[j]` (0-based indices).
//
// # Safety
// `ds` live, `aux` live or null, arrays of length `m`, outputs writable.
enum QifStatus qif_profile_test(const struct QifDataset *ds,
                                int link,
                                int working,
                                const struct QifAux *aux,
                                const size_t *indices,
                                const double *values,
                                size_t m,
                                double *statistic,
                                double *p_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QIF_H */
