#ifndef CIRCMAP_H
#define CIRCMAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CmStatus {
  CM_STATUS_OK = 0,
  CM_STATUS_NULL_POINTER = 1,
  CM_STATUS_INVALID_PARAMS = 2,
  CM_STATUS_CONFIG = 3,
  CM_STATUS_PRECONDITION = 4,
  CM_STATUS_SINGULAR_ORBIT = 5,
  CM_STATUS_SINGULAR_POINT = 6,
  CM_STATUS_CAP_REACHED = 7,
  CM_STATUS_NUMERIC = 8,
  CM_STATUS_BUFFER_TOO_SMALL = 9,
  CM_STATUS_PANIC = 10,
} CmStatus;

typedef enum CmSuite {
  CM_SUITE_BETA1 = 1,
  CM_SUITE_BETA3 = 3,
} CmSuite;

/**
 * Opaque parameter set.
 */
typedef struct CmParams CmParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t cm_last_error(char *buf, size_t len);

/**
 * Built-in reference parameters with `mu = 0`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CmStatus cm_params_new_suite(enum CmSuite suite, struct CmParams **out);

/**
 * Parameters from flat `key = value` config text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CmStatus cm_params_from_config(const char *text, struct CmParams **out);

/**
 * New handle equal to `h` with the parameter shift replaced.
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum CmStatus cm_params_with_mu(const struct CmParams *h, double mu, struct CmParams **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `h` must be null or a handle not yet freed.
 */
void cm_params_free(struct CmParams *h);

/**
 * `eps` of the parameter set.
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum CmStatus cm_params_eps(const struct CmParams *h, double *out);

/**
 * `f(z)` and `f'(z)` on the circle `[-1, 1)`.
 *
 * # Safety
 * `h` must be a live handle; `value` and `deriv` valid pointers.
 */
enum CmStatus cm_map_eval(const struct CmParams *h, double z, double *value, double *deriv);

/**
 * Position of the critical point `x_k`.
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum CmStatus cm_critical_point(const struct CmParams *h, int64_t k, double *out);

/**
 * `(1/n) log |(f^n)'(x0)|`.
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum CmStatus cm_lyapunov(const struct CmParams *h, double x0, size_t n, double *out);

/**
 * Binding period `p(l, s)` with the default cap `50 (|l| + |s|)`; blocks
 * with `|s| <= s(tau)` report 0. A capped block returns `CapReached`.
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum CmStatus cm_binding_period(const struct CmParams *h, int64_t l, int64_t s, size_t *out);

/**
 * Exclusion verdict of the handle's `mu` up to `horizon_n`, with the default
 * `M_hat` and `k_test_max = k0 + 10`. Writes 1 for a survivor, 0 otherwise.
 *
 * # Safety
 * `h` must be a live handle and `survived` a valid pointer.
 */
enum CmStatus cm_exclusion_verdict(const struct CmParams *h, size_t horizon_n, int32_t *survived);

/**
 * Occupation density on `n_bins` equal bins of `[-1, 1)`, averaged over
 * `sample_size` seeded orbits of `n_iter` iterates each. `density` must
 * hold `n_bins` values.
 *
 * # Safety
 * `h` must be a live handle and `density` point to `len` writable values.
 */
enum CmStatus cm_density(const struct CmParams *h,
                         size_t n_iter,
                         size_t n_bins,
                         size_t sample_size,
                         uint64_t seed,
                         double *density,
                         size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CIRCMAP_H */
