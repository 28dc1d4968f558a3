#ifndef ORBITLAB_H
#define ORBITLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every function that can fail.
 */
typedef enum {
  ORBITLAB_STATUS_OK = 0,
  ORBITLAB_STATUS_NULL_POINTER = 1,
  ORBITLAB_STATUS_INVALID_INPUT = 2,
  ORBITLAB_STATUS_PARSE = 3,
  ORBITLAB_STATUS_HYPOTHESIS = 4,
  ORBITLAB_STATUS_NUMERICAL = 5,
  ORBITLAB_STATUS_IO = 6,
  ORBITLAB_STATUS_OUT_OF_RANGE = 7,
  ORBITLAB_STATUS_PANIC = 8,
} OrbitlabStatus;

/**
 * Norms ‖Tⁿx‖ for n = 0..=horizon.
 */
typedef struct OrbitlabProfile OrbitlabProfile;

/**
 * A parsed symbol: analytic series or tridiagonal triple.
 */
typedef struct OrbitlabSymbol OrbitlabSymbol;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *orbitlab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *orbitlab_version(void);

/**
 * Parses a symbol in the command-line grammar (`poly:2,1`, `tridiag:1,0,0.25`,
 * `builtin:cs-halfplane`, ...).
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
OrbitlabStatus orbitlab_symbol_parse(const char *text, OrbitlabSymbol **out);

/**
 * Builds an analytic polynomial symbol from real and imaginary coefficient arrays.
 *
 * # Safety
 * `re` and `im` must point to `len` doubles; `im` may be null for real coefficients.
 */
OrbitlabStatus orbitlab_symbol_from_coeffs(const double *re,
                                           const double *im,
                                           size_t len,
                                           OrbitlabSymbol **out);

/**
 * Evaluates the symbol at z = re + i·im.
 *
 * # Safety
 * `sym` must come from this library; output pointers must be valid.
 */
OrbitlabStatus orbitlab_symbol_eval(const OrbitlabSymbol *sym,
                                    double re,
                                    double im,
                                    double *out_re,
                                    double *out_im);

/**
 * 1 for an analytic series, 0 for a tridiagonal triple, -1 for null.
 *
 * # Safety
 * `sym` must come from this library or be null.
 */
int orbitlab_symbol_is_analytic(const OrbitlabSymbol *sym);

/**
 * # Safety
 * `sym` must come from this library and not be used afterwards.
 */
void orbitlab_symbol_free(OrbitlabSymbol *sym);

/**
 * Orbit of the coanalytic Toeplitz operator T_g* on the first `len` Taylor
 * coefficients, starting from x = x_re + i·x_im.
 *
 * # Safety
 * `sym` must come from this library; `x_re` must point to `len` doubles and
 * `x_im` to `len` doubles or be null.
 */
OrbitlabStatus orbitlab_orbit_coanalytic(const OrbitlabSymbol *sym,
                                         const double *x_re,
                                         const double *x_im,
                                         size_t len,
                                         size_t horizon,
                                         OrbitlabProfile **out);

/**
 * Number of stored norms (horizon + 1), or 0 for null.
 *
 * # Safety
 * `p` must come from this library or be null.
 */
size_t orbitlab_profile_len(const OrbitlabProfile *p);

/**
 * Writes ‖Tⁿx‖ to `out`.
 *
 * # Safety
 * `p` must come from this library and `out` be valid.
 */
OrbitlabStatus orbitlab_profile_norm(const OrbitlabProfile *p, size_t n, double *out);

/**
 * # Safety
 * `p` must come from this library and not be used afterwards.
 */
void orbitlab_profile_free(OrbitlabProfile *p);

/**
 * Taylor-coefficient ℓ² norm of (1−z)^k (1+c−cz)^{−n}.
 *
 * # Safety
 * `out` must be valid.
 */
OrbitlabStatus orbitlab_taylor_norm(uint32_t k, double c_par, size_t n, double *out);

/**
 * Runs one command line (arguments after the program name) and returns the
 * JSON report in `out_json`, to be released with [`orbitlab_string_free`].
 * `exit_code` receives the code the binary would exit with.
 *
 * # Safety
 * `argv` must point to `argc` NUL-terminated strings.
 */
OrbitlabStatus orbitlab_run(const char *const *argv, size_t argc, char **out_json, int *exit_code);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void orbitlab_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ORBITLAB_H */
