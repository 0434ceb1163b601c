#ifndef DAGW_H
#define DAGW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every call.
 */
typedef enum DagwStatus {
  DAGW_STATUS_OK = 0,
  DAGW_STATUS_NULL_POINTER = 1,
  DAGW_STATUS_INVALID_ARGUMENT = 2,
  DAGW_STATUS_NOT_POSITIVE_DEFINITE = 3,
  DAGW_STATUS_NUMERICAL = 4,
  DAGW_STATUS_BUFFER_TOO_SMALL = 5,
  DAGW_STATUS_PANIC = 6,
} DagwStatus;

/*
 Estimator variant.
 */
typedef enum DagwVariant {
  DAGW_VARIANT_DAGW_BIC = 0,
  DAGW_VARIANT_DAGW = 1,
  DAGW_VARIANT_MLE = 2,
  DAGW_VARIANT_BAYES = 3,
} DagwVariant;

/*
 Opaque estimate handle.
 */
typedef struct DagwEstimate DagwEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null if none. The
 pointer stays valid until the next failing call on the same thread.
 */
const char *dagw_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *dagw_version(void);

/*
 Runs the estimator on the `n x p` row-major data matrix `data` with `k`
 random orderings and default settings otherwise. On success `*out` holds
 a new handle.

 # Safety
 `data` must point to `n * p` readable doubles and `out` to writable
 storage for one pointer.
 */
enum DagwStatus dagw_estimate(const double *data,
                              size_t n,
                              size_t p,
                              size_t k,
                              enum DagwVariant variant,
                              uint64_t seed,
                              struct DagwEstimate **out);

/*
 Releases a handle. Null is ignored.

 # Safety
 `est` must be null or a handle from [`dagw_estimate`] not yet freed.
 */
void dagw_estimate_free(struct DagwEstimate *est);

/*
 Dimension `p` of the estimate, or 0 for a null handle.

 # Safety
 `est` must be null or a live handle.
 */
size_t dagw_estimate_dim(const struct DagwEstimate *est);

/*
 Selected threshold (0 for unthresholded variants), or NaN for a null handle.

 # Safety
 `est` must be null or a live handle.
 */
double dagw_estimate_tau(const struct DagwEstimate *est);

/*
 Copies the final `p x p` precision matrix into `out` (row-major).

 # Safety
 `est` must be a live handle and `out` must hold `len` writable doubles.
 */
enum DagwStatus dagw_estimate_omega(const struct DagwEstimate *est, double *out, size_t len);

/*
 Copies the averaged unit lower-triangular factor into `l_out` (`p * p`,
 row-major) and the averaged conditional variances into `d_out` (`p`).

 # Safety
 `est` must be a live handle; the buffers must hold the stated lengths.
 */
enum DagwStatus dagw_estimate_factors(const struct DagwEstimate *est,
                                      double *l_out,
                                      size_t l_len,
                                      double *d_out,
                                      size_t d_len);

/*
 Modified Cholesky decomposition of the symmetric positive definite `p x p`
 matrix `a`: `a = L diag(d)^-1 L^T`.

 # Safety
 `a` must hold `p * p` doubles, `l_out` room for `p * p` and `d_out` for `p`.
 */
enum DagwStatus dagw_mcd(const double *a, size_t p, double *l_out, double *d_out);

/*
 The five losses of `est` against the truth `omega0` (both `p x p`), in the
 order Stein, support absolute, support squared, global absolute, global
 squared. The support is read from the factorization of `omega0`.

 # Safety
 `est` and `omega0` must hold `p * p` doubles and `out` room for 5.
 */
enum DagwStatus dagw_losses(const double *est, const double *omega0, size_t p, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DAGW_H */
