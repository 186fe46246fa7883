#ifndef RBMLAB_H
#define RBMLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum RbmStatus {
  RBM_STATUS_OK = 0,
  // A required pointer argument was null.
  RBM_STATUS_NULL_ARGUMENT = 1,
  // A parameter violates a documented constraint.
  RBM_STATUS_CONFIG = 2,
  // A numerical kernel failed.
  RBM_STATUS_NUMERICAL = 3,
  // An estimator had no usable data.
  RBM_STATUS_INSUFFICIENT = 4,
  RBM_STATUS_IO = 5,
  // Malformed binary matrix or JSON text.
  RBM_STATUS_DECODE = 6,
  // The output buffer is too small; the required length was written.
  RBM_STATUS_BUFFER_TOO_SMALL = 7,
  // An internal panic was caught.
  RBM_STATUS_PANIC = 8,
} RbmStatus;

// Opaque band matrix handle.
typedef struct RbmMatrix RbmMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *rbm_last_error(void);

// Library version as a static NUL-terminated string.
const char *rbm_version(void);

// Sample a Gaussian band matrix of size `2 n_half + 1` with half band width
// `floor(n_half^alpha)`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum RbmStatus rbm_matrix_sample(size_t n_half,
                                 double alpha,
                                 bool periodic,
                                 uint64_t seed,
                                 struct RbmMatrix **out);

// Like [`rbm_matrix_sample`] with an explicit half band width.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum RbmStatus rbm_matrix_sample_half_band(size_t n_half,
                                           size_t half_band,
                                           bool periodic,
                                           uint64_t seed,
                                           struct RbmMatrix **out);

// Decode the little-endian binary matrix layout.
//
// # Safety
// `bytes` must point to `len` readable bytes and `out` to writable storage.
enum RbmStatus rbm_matrix_from_bytes(const uint8_t *bytes, size_t len, struct RbmMatrix **out);

// Encode a matrix in the binary layout.
//
// # Safety
// `m` must be a live handle; `buf` must hold `cap` bytes; `out_len` may be null.
enum RbmStatus rbm_matrix_to_bytes(const struct RbmMatrix *m,
                                   uint8_t *buf,
                                   size_t cap,
                                   size_t *out_len);

// Release a handle; null is ignored.
//
// # Safety
// `m` must be null or a handle not yet freed.
void rbm_matrix_free(struct RbmMatrix *m);

// Matrix dimension `2N+1`, or 0 for a null handle.
//
// # Safety
// `m` must be null or a live handle.
size_t rbm_matrix_dimension(const struct RbmMatrix *m);

// Half band width `L`, or 0 for a null handle.
//
// # Safety
// `m` must be null or a live handle.
size_t rbm_matrix_half_band(const struct RbmMatrix *m);

// Entry `H(i, j)` with row and column indices in `0..2N+1`.
//
// # Safety
// `m` must be a live handle and `out` writable.
enum RbmStatus rbm_matrix_entry(const struct RbmMatrix *m, size_t i, size_t j, double *out);

// All eigenvalues in increasing order.
//
// # Safety
// `m` must be a live handle; `buf` must hold `cap` doubles; `out_len` may be null.
enum RbmStatus rbm_matrix_eigenvalues(const struct RbmMatrix *m,
                                      double *buf,
                                      size_t cap,
                                      size_t *out_len);

// Number of eigenvalues in `(a, b]`.
//
// # Safety
// `m` must be a live handle and `out` writable.
enum RbmStatus rbm_matrix_count_in(const struct RbmMatrix *m, double a, double b, uint64_t *out);

// Column `j` of the resolvent `(H - z)^{-1}`, `z = re + i im` with `im > 0`,
// split into real and imaginary parts.
//
// # Safety
// `m` must be a live handle; `re_out` and `im_out` must hold `cap` doubles.
enum RbmStatus rbm_matrix_greens_column(const struct RbmMatrix *m,
                                        size_t j,
                                        double re,
                                        double im,
                                        double *re_out,
                                        double *im_out,
                                        size_t cap,
                                        size_t *out_len);

// Semicircle density `sqrt(4 - E^2) / (2 pi)` on `[-2, 2]`, zero outside.
double rbm_semicircle_density(double e);

// Semicircle mass of `[a, b]`.
double rbm_semicircle_measure(double a, double b);

// Seed of trial `trial` at grid point `grid` under master seed `master`.
uint64_t rbm_derive_trial_seed(uint64_t master, uint64_t grid, uint64_t trial);

// Run an experiment described by a JSON config; on success `*manifest_out`
// receives the manifest JSON, to be released with [`rbm_string_free`].
//
// # Safety
// `config_json` must be a NUL-terminated string and `manifest_out` writable.
enum RbmStatus rbm_run_experiment(const char *config_json, char **manifest_out);

// Release a string returned by this library; null is ignored.
//
// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void rbm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RBMLAB_H */
