#ifndef QSTOKES_H
#define QSTOKES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QsStatus {
  QS_STATUS_OK = 0,
  QS_STATUS_NULL_POINTER = 1,
  QS_STATUS_BUFFER_TOO_SMALL = 2,
  QS_STATUS_INVALID_CONTEXT = 3,
  QS_STATUS_CONTEXT_MISMATCH = 4,
  QS_STATUS_DIMENSION = 5,
  QS_STATUS_ZERO_ARGUMENT = 6,
  QS_STATUS_NUMERICALLY_ZERO = 7,
  QS_STATUS_POLE = 8,
  QS_STATUS_SINGULAR = 9,
  QS_STATUS_RESONANT = 10,
  QS_STATUS_UNSUPPORTED = 11,
  QS_STATUS_FORBIDDEN_DIRECTION = 12,
  QS_STATUS_DIVERGENCE = 13,
  QS_STATUS_CONTOUR = 14,
  QS_STATUS_NOT_A_SECTION = 15,
  QS_STATUS_ROOT_COUNT = 16,
  QS_STATUS_PANIC = 17,
} QsStatus;

/**
 * Numeric context: modulus `q` and the coefficient window.
 */
typedef struct QsContext QsContext;

/**
 * A two-slope module `(d, A, U)`.
 */
typedef struct QsModule QsModule;

/**
 * The summed gauge `F_c̄` of a module in one direction.
 */
typedef struct QsSummation QsSummation;

typedef struct QsComplex {
  double re;
  double im;
} QsComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *qs_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`) and returns the length the full
 * message needs, including the terminator. Empty after a success.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t qs_last_error(char *buf, size_t len);

/**
 * `θ_q(z) = Σ q^{-n(n+1)/2} zⁿ`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum QsStatus qs_theta(struct QsComplex q, struct QsComplex z, struct QsComplex *out);

/**
 * `θ_q(z)` by the Jacobi triple product.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum QsStatus qs_theta_triple(struct QsComplex q, struct QsComplex z, struct QsComplex *out);

/**
 * The q-character `e_{q,a}(z) = θ_q(z) / θ_q(z/a)`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum QsStatus qs_e_qa(struct QsComplex q,
                      struct QsComplex z,
                      struct QsComplex a,
                      struct QsComplex *out);

/**
 * Creates a context with modulus `q`, window `[-window, window]` and the
 * default tolerances.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum QsStatus qs_context_new(struct QsComplex q, int64_t window, struct QsContext **out);

/**
 * # Safety
 * `ctx` must be null or come from [`qs_context_new`], and not be freed twice.
 */
void qs_context_free(struct QsContext *ctx);

/**
 * Builds the module `σ_q Y = [[z^{-d} A, U], [0, 1]] Y` of rank `r`.
 *
 * `a` holds `A` row-major (`r·r` values). `u` holds the `r` components of
 * `U` one after another, each as `u_len` coefficients starting at `z^{u_start}`.
 *
 * # Safety
 * `ctx` must be a live context; `a` and `u` must hold the stated counts;
 * `out` must be valid for one write.
 */
enum QsStatus qs_module_new(const struct QsContext *ctx,
                            uint32_t d,
                            size_t r,
                            const struct QsComplex *a,
                            int64_t u_start,
                            size_t u_len,
                            const struct QsComplex *u,
                            struct QsModule **out);

/**
 * # Safety
 * `m` must be null or come from [`qs_module_new`], and not be freed twice.
 */
void qs_module_free(struct QsModule *m);

/**
 * Rank `r` of the module, 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live module.
 */
size_t qs_module_rank(const struct QsModule *m);

/**
 * The `r·d` q-Borel invariants, grouped by root of unity `j`.
 *
 * # Safety
 * `m` must be a live module, `out` valid for `cap` values, `len` for one write.
 */
enum QsStatus qs_borel_invariants(const struct QsModule *m,
                                  struct QsComplex *out,
                                  size_t cap,
                                  size_t *len);

/**
 * The `r·d` Serre-duality pairings, in the order of [`qs_borel_invariants`].
 *
 * # Safety
 * As for [`qs_borel_invariants`].
 */
enum QsStatus qs_serre_invariants(const struct QsModule *m,
                                  struct QsComplex *out,
                                  size_t cap,
                                  size_t *len);

/**
 * `min |c^d qⁿ − λ| / ‖A‖`; directions below `1e-8` are forbidden.
 *
 * # Safety
 * `m` must be a live module and `out` valid for one write.
 */
enum QsStatus qs_forbidden_gap(const struct QsModule *m, struct QsComplex c, double *out);

/**
 * Sums the gauge transformation in the direction of `c`.
 *
 * # Safety
 * `m` must be a live module and `out` valid for one write.
 */
enum QsStatus qs_sum(const struct QsModule *m, struct QsComplex c, struct QsSummation **out);

/**
 * `F_c̄(z)`, `r` values.
 *
 * # Safety
 * `s` must be a live summation, `out` valid for `cap` values, `len` for one write.
 */
enum QsStatus qs_summation_eval(const struct QsSummation *s,
                                struct QsComplex z,
                                struct QsComplex *out,
                                size_t cap,
                                size_t *len);

/**
 * # Safety
 * `s` must be null or come from [`qs_sum`], and not be freed twice.
 */
void qs_summation_free(struct QsSummation *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QSTOKES_H */
