#ifndef DITHERCAP_H
#define DITHERCAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum DcStatus {
  DC_STATUS_OK = 0,
  DC_STATUS_NULL_POINTER = 1,
  DC_STATUS_INVALID_PARAMETER = 2,
  DC_STATUS_DOMAIN = 3,
  DC_STATUS_TOLERANCE_NOT_MET = 4,
  // The capacity iteration hit its cap; the best iterate is still returned.
  DC_STATUS_NON_CONVERGENCE = 5,
  DC_STATUS_INFEASIBLE_BRACKET = 6,
  DC_STATUS_FISHER_BOUND_VIOLATION = 7,
  DC_STATUS_BOUND_INVALID = 8,
  DC_STATUS_INSUFFICIENT_SAMPLES = 9,
  DC_STATUS_PANIC = 10,
} DcStatus;

// Opaque capacity result handle.
typedef struct DcCapacityResult DcCapacityResult;

// Opaque channel handle.
typedef struct DcChannel DcChannel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *dc_version(void);

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *dc_last_error_message(void);

// Creates a channel with noise standard deviation `sigma` and step `delta`.
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum DcStatus dc_channel_new(double sigma, double delta, struct DcChannel **out);

// Releases a channel. Null is ignored.
//
// # Safety
// `ch` must come from [`dc_channel_new`] and not be used afterwards.
void dc_channel_free(struct DcChannel *ch);

// Density of the equivalent noise at `z`.
//
// # Safety
// `ch` must be a live handle and `out` writable.
enum DcStatus dc_noise_pdf(const struct DcChannel *ch, double z, double *out);

// CDF of the equivalent noise at `z`.
//
// # Safety
// `ch` must be a live handle and `out` writable.
enum DcStatus dc_noise_cdf(const struct DcChannel *ch, double z, double *out);

// `P / (sigma^2 + delta^2 / 12)`.
//
// # Safety
// `ch` must be a live handle and `out` writable.
enum DcStatus dc_snqnr(const struct DcChannel *ch, double p, double *out);

// Capacity under average power `p` and peak amplitude `a`. Zero for
// `grid_points`, `tol` or `max_iter` selects the default. On
// `DC_STATUS_NON_CONVERGENCE` the best iterate is still written to `out`.
//
// # Safety
// `ch` must be a live handle and `out` writable.
enum DcStatus dc_capacity(const struct DcChannel *ch,
                          double p,
                          double a,
                          uintptr_t grid_points,
                          double tol,
                          uintptr_t max_iter,
                          struct DcCapacityResult **out);

// Releases a capacity result. Null is ignored.
//
// # Safety
// `r` must come from [`dc_capacity`] and not be used afterwards.
void dc_capacity_result_free(struct DcCapacityResult *r);

// Achieved rate in nats; NaN for a null handle.
//
// # Safety
// `r` must be a live handle or null.
double dc_capacity_result_rate(const struct DcCapacityResult *r);

// Upper bound in nats; NaN for a null handle.
//
// # Safety
// `r` must be a live handle or null.
double dc_capacity_result_upper_bound(const struct DcCapacityResult *r);

// Final duality gap estimate; NaN for a null handle.
//
// # Safety
// `r` must be a live handle or null.
double dc_capacity_result_gap(const struct DcCapacityResult *r);

// Iterations used; 0 for a null handle.
//
// # Safety
// `r` must be a live handle or null.
uintptr_t dc_capacity_result_iterations(const struct DcCapacityResult *r);

// Number of atoms in the optimizing input; 0 for a null handle.
//
// # Safety
// `r` must be a live handle or null.
uintptr_t dc_capacity_result_len(const struct DcCapacityResult *r);

// Copies up to `cap` atoms into `xs` and `ps`; `written` receives the count.
//
// # Safety
// `xs` and `ps` must each hold `cap` doubles.
enum DcStatus dc_capacity_result_atoms(const struct DcCapacityResult *r,
                                       double *xs,
                                       double *ps,
                                       uintptr_t cap,
                                       uintptr_t *written);

// `I(X; X + Z)` in nats for the input with `n` atoms at `xs` with masses `ps`.
//
// # Safety
// `xs` and `ps` must each hold `n` doubles.
enum DcStatus dc_mutual_information(const struct DcChannel *ch,
                                    const double *xs,
                                    const double *ps,
                                    uintptr_t n,
                                    double *out);

// Low-SNR slope `I(0)/2` under a finite peak-to-average ratio.
//
// # Safety
// `ch` must be a live handle and `out` writable.
enum DcStatus dc_low_snr_slope(const struct DcChannel *ch, double *out);

// Threshold-probe lower bound on the slope without peak constraint, over
// cell counts 1, 2, ..., 64.
//
// # Safety
// `ch` must be a live handle and `out` writable.
enum DcStatus dc_slope_lower_bound(const struct DcChannel *ch, double offset, double *out);

// Optimized duality upper bound on the capacity, in nats.
//
// # Safety
// `ch` must be a live handle and `out` writable.
enum DcStatus dc_dual_upper_bound(const struct DcChannel *ch, double p, double a, double *out);

// Capacity of the 1-bit quantizer without dither, in nats.
//
// # Safety
// `out` must be writable.
enum DcStatus dc_one_bit_capacity(double p, double sigma, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DITHERCAP_H */
