#ifndef PCN_H
#define PCN_H

/* Generated by cbindgen from the pcn-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a call into this library.
typedef enum PcnStatus {
  // The call succeeded and every `out` parameter was written.
  PCN_STATUS_OK = 0,
  // A required pointer argument was null.
  PCN_STATUS_NULL_ARGUMENT = 1,
  // An argument failed validation (range, length, parse).
  PCN_STATUS_INVALID_ARGUMENT = 2,
  // The operation itself failed; see `pcn_last_error_message`.
  PCN_STATUS_RUNTIME_ERROR = 3,
} PcnStatus;

// Streaming one-step forecaster for load-estimate series (opaque).
typedef struct PcnForecaster PcnForecaster;

// Tuning knobs of the router load-factor computation; obtain defaults
// from `pcn_load_params_default` and override selectively.
typedef struct PcnLoadParams {
  // Weight of the persistent-queue term relative to fresh arrivals.
  double queue_weight;
  // Fraction of capacity regarded as "full" (0 < x <= 1).
  double target_utilization;
  // Measurement window length in seconds.
  double window;
  // Smoothing weight of the persistent-queue moving average (0 < x <= 1).
  double ewma_weight;
  // Seconds between queue samples feeding the moving average.
  double sample_interval;
  // Gain of the affine calibration applied before clamping.
  double scale;
  // Offset of the affine calibration.
  double offset;
} PcnLoadParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's last error message into `buffer` as a
// NUL-terminated string, truncating if `capacity` is too small.
//
// Returns the size (including the NUL) needed to hold the whole message;
// zero means no error has been recorded yet. `buffer` may be null when
// only the size is wanted.
//
// # Safety
//
// `buffer`, when non-null, must be writable for `capacity` bytes.
size_t pcn_last_error_message(char *buffer, size_t capacity);

// Library version as a static NUL-terminated string.
const char *pcn_version(void);

// Decide whether a packet with this TTL and IPid may be marked by the
// router currently holding it (the fields must agree modulo `slots`).
//
// `slots` must be nonzero.
//
// # Safety
//
// `out_markable`, when non-null, must be writable.
enum PcnStatus pcn_is_markable(uint8_t ttl, uint16_t ipid, uint8_t slots, bool *out_markable);

// Recover which router position (1-based) on an `hops`-long path was
// eligible to mark a packet carrying this IPid.
//
// Writes 0 to `out_router` when no router on the path was eligible.
// `out_ambiguous` is set when several routers share the residue (paths
// longer than `slots`); the nearest one is reported.
//
// # Safety
//
// `out_router` and `out_ambiguous`, when non-null, must be writable.
enum PcnStatus pcn_attribute_router(uint16_t ipid,
                                    uint8_t slots,
                                    uint8_t hops,
                                    uint8_t *out_router,
                                    bool *out_ambiguous);

// Default load-factor parameters.
struct PcnLoadParams pcn_load_params_default(void);

// Compute a link's load factor over one window, as a percentage clamped
// to `[0, 100]`.
//
// `offered_packets` counts packets offered to the link in the window
// (accepted and dropped alike), `persistent_queue` is the smoothed
// waiting-packet backlog, `capacity_pps` the service rate. All three must
// be finite and nonnegative; `capacity_pps`, the window and the target
// utilisation must be positive.
//
// # Safety
//
// `params` must point at a valid parameter struct and `out_load`, when
// non-null, must be writable.
enum PcnStatus pcn_load_factor(double offered_packets,
                               double persistent_queue,
                               double capacity_pps,
                               const struct PcnLoadParams *params,
                               double *out_load);

// Sample autocorrelation of `series` at lags `0..=max_lag`.
//
// `out_values` must have room for `max_lag + 1` doubles (index = lag,
// lag 0 is always 1). `out_band` receives the white-noise 95% band
// `1.96 / sqrt(len)`. Requires `len > max_lag` and a finite series.
//
// # Safety
//
// `series` must be readable for `len` doubles and `out_values` writable
// for `max_lag + 1`; `out_band` must be writable.
enum PcnStatus pcn_acf(const double *series,
                       size_t len,
                       size_t max_lag,
                       double *out_values,
                       double *out_band);

// Sample partial autocorrelation of `series` at lags `0..=max_lag`, same
// contract as `pcn_acf`.
//
// # Safety
//
// Same as `pcn_acf`.
enum PcnStatus pcn_pacf(const double *series,
                        size_t len,
                        size_t max_lag,
                        double *out_values,
                        double *out_band);

// Fit a once-integrated first-order moving-average model to `series` by
// conditional least squares on the differenced values.
//
// Requires at least 20 points. Writes the invertible coefficient
// (negative under positive autocorrelation of the level) and the
// residual variance of the fit.
//
// # Safety
//
// `series` must be readable for `len` doubles; the out pointers, when
// non-null, must be writable.
enum PcnStatus pcn_fit_arima011(const double *series,
                                size_t len,
                                double *out_theta,
                                double *out_residual_variance);

// Create a forecaster with a fixed moving-average coefficient
// (`|theta| < 1`; pass 0 for the crude repeat-last-value predictor).
// The handle must be released with `pcn_forecaster_free`.
//
// # Safety
//
// `out_handle`, when non-null, must be writable.
enum PcnStatus pcn_forecaster_new(double theta, struct PcnForecaster **out_handle);

// Fold in the estimate observed for the period that just closed and
// return the forecast for the next one, clipped to `[0, 100]`.
//
// # Safety
//
// `handle` must come from `pcn_forecaster_new` and not have been freed;
// `out_forecast`, when non-null, must be writable.
enum PcnStatus pcn_forecaster_observe(struct PcnForecaster *handle,
                                      double value,
                                      double *out_forecast);

// Release a forecaster handle. Passing null is a no-op.
//
// # Safety
//
// `handle` must come from `pcn_forecaster_new` and not be used again.
void pcn_forecaster_free(struct PcnForecaster *handle);

// Run a full simulation: load the scenario at `config_path`, simulate it
// under `seed`, and write the artifact directory (five CSV logs, the
// scenario copy, and a manifest) to `out_dir`, creating it if needed.
//
// Paths must be valid UTF-8. Scenario problems yield
// `PCN_STATUS_INVALID_ARGUMENT`; I/O and engine failures yield
// `PCN_STATUS_RUNTIME_ERROR`.
//
// # Safety
//
// `config_path` and `out_dir`, when non-null, must be NUL-terminated
// strings.
enum PcnStatus pcn_run_simulation(const char *config_path, uint64_t seed, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PCN_H */
