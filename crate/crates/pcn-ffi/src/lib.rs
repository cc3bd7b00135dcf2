//! C ABI for the one-bit congestion-notification toolkit.
//!
//! Thin, allocation-stingy wrappers over the `pcn` crate: header
//! markability and mark attribution, router load factors, correlation
//! diagnostics, the moving-average fit, a streaming forecaster behind an
//! opaque handle, and a one-call simulation runner that writes a full
//! artifact directory.
//!
//! Conventions, uniform across the surface:
//!
//! * every fallible function returns a [`PcnStatus`] and writes results
//!   through `out` pointers, touched only on [`PcnStatus::Ok`];
//! * passing a null pointer yields [`PcnStatus::NullArgument`], never a
//!   crash — but non-null pointers must be valid for the stated lengths,
//!   which is why the pointer-taking functions are `unsafe`;
//! * after any non-`Ok` status, [`pcn_last_error_message`] retrieves a
//!   human-readable description for the calling thread.
//!
//! The C header mirroring this module lives at `include/pcn.h` and is
//! regenerated by the build script on every change.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use pcn::forecast::{self, ForecastState};
use pcn::loadfactor::{self, LoadFactorParams};
use pcn::protocol::{self, ProtocolParams};
use pcn::sim::{artifacts, config, engine};

/// Outcome of a call into this library.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcnStatus {
    /// The call succeeded and every `out` parameter was written.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument failed validation (range, length, parse).
    InvalidArgument = 2,
    /// The operation itself failed; see `pcn_last_error_message`.
    RuntimeError = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: PcnStatus, message: impl Into<Vec<u8>>) -> PcnStatus {
    let message = CString::new(message).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
    status
}

fn fail_error(error: pcn::Error) -> PcnStatus {
    let status = if error.is_validation() {
        PcnStatus::InvalidArgument
    } else {
        PcnStatus::RuntimeError
    };
    fail(status, error.to_string())
}

/// Copy the calling thread's last error message into `buffer` as a
/// NUL-terminated string, truncating if `capacity` is too small.
///
/// Returns the size (including the NUL) needed to hold the whole message;
/// zero means no error has been recorded yet. `buffer` may be null when
/// only the size is wanted.
///
/// # Safety
///
/// `buffer`, when non-null, must be writable for `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn pcn_last_error_message(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes_with_nul();
        if !buffer.is_null() && capacity > 0 {
            let copy = bytes.len().min(capacity);
            // SAFETY: caller promises `buffer` points at `capacity` bytes.
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buffer, copy);
                *buffer.add(copy - 1) = 0;
            }
        }
        if bytes.len() > 1 {
            bytes.len()
        } else {
            0
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pcn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Decide whether a packet with this TTL and IPid may be marked by the
/// router currently holding it (the fields must agree modulo `slots`).
///
/// `slots` must be nonzero.
///
/// # Safety
///
/// `out_markable`, when non-null, must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcn_is_markable(
    ttl: u8,
    ipid: u16,
    slots: u8,
    out_markable: *mut bool,
) -> PcnStatus {
    if out_markable.is_null() {
        return fail(PcnStatus::NullArgument, "out_markable is null");
    }
    if slots == 0 {
        return fail(PcnStatus::InvalidArgument, "slots must be nonzero");
    }
    // SAFETY: null-checked above; caller owns the pointee.
    unsafe { *out_markable = protocol::is_markable(ttl, ipid, slots) };
    PcnStatus::Ok
}

/// Recover which router position (1-based) on an `hops`-long path was
/// eligible to mark a packet carrying this IPid.
///
/// Writes 0 to `out_router` when no router on the path was eligible.
/// `out_ambiguous` is set when several routers share the residue (paths
/// longer than `slots`); the nearest one is reported.
///
/// # Safety
///
/// `out_router` and `out_ambiguous`, when non-null, must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcn_attribute_router(
    ipid: u16,
    slots: u8,
    hops: u8,
    out_router: *mut u8,
    out_ambiguous: *mut bool,
) -> PcnStatus {
    if out_router.is_null() || out_ambiguous.is_null() {
        return fail(PcnStatus::NullArgument, "out_router/out_ambiguous is null");
    }
    if slots == 0 || hops == 0 {
        return fail(PcnStatus::InvalidArgument, "slots and hops must be nonzero");
    }
    let params = ProtocolParams {
        slots,
        presignal: false,
        hops,
    };
    let (router, ambiguous) = match protocol::attribute_router(ipid, &params) {
        Some(a) => (a.router, a.ambiguous),
        None => (0, false),
    };
    // SAFETY: null-checked above; caller owns the pointees.
    unsafe {
        *out_router = router;
        *out_ambiguous = ambiguous;
    }
    PcnStatus::Ok
}

/// Tuning knobs of the router load-factor computation; obtain defaults
/// from `pcn_load_params_default` and override selectively.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PcnLoadParams {
    /// Weight of the persistent-queue term relative to fresh arrivals.
    pub queue_weight: f64,
    /// Fraction of capacity regarded as "full" (0 < x <= 1).
    pub target_utilization: f64,
    /// Measurement window length in seconds.
    pub window: f64,
    /// Smoothing weight of the persistent-queue moving average (0 < x <= 1).
    pub ewma_weight: f64,
    /// Seconds between queue samples feeding the moving average.
    pub sample_interval: f64,
    /// Gain of the affine calibration applied before clamping.
    pub scale: f64,
    /// Offset of the affine calibration.
    pub offset: f64,
}

impl From<PcnLoadParams> for LoadFactorParams {
    fn from(p: PcnLoadParams) -> Self {
        LoadFactorParams {
            queue_weight: p.queue_weight,
            target_utilization: p.target_utilization,
            window: p.window,
            ewma_weight: p.ewma_weight,
            sample_interval: p.sample_interval,
            scale: p.scale,
            offset: p.offset,
        }
    }
}

/// Default load-factor parameters.
#[no_mangle]
pub extern "C" fn pcn_load_params_default() -> PcnLoadParams {
    let d = LoadFactorParams::default();
    PcnLoadParams {
        queue_weight: d.queue_weight,
        target_utilization: d.target_utilization,
        window: d.window,
        ewma_weight: d.ewma_weight,
        sample_interval: d.sample_interval,
        scale: d.scale,
        offset: d.offset,
    }
}

/// Compute a link's load factor over one window, as a percentage clamped
/// to `[0, 100]`.
///
/// `offered_packets` counts packets offered to the link in the window
/// (accepted and dropped alike), `persistent_queue` is the smoothed
/// waiting-packet backlog, `capacity_pps` the service rate. All three must
/// be finite and nonnegative; `capacity_pps`, the window and the target
/// utilisation must be positive.
///
/// # Safety
///
/// `params` must point at a valid parameter struct and `out_load`, when
/// non-null, must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcn_load_factor(
    offered_packets: f64,
    persistent_queue: f64,
    capacity_pps: f64,
    params: *const PcnLoadParams,
    out_load: *mut f64,
) -> PcnStatus {
    if params.is_null() || out_load.is_null() {
        return fail(PcnStatus::NullArgument, "params/out_load is null");
    }
    // SAFETY: null-checked above.
    let params = LoadFactorParams::from(unsafe { *params });
    let inputs_valid = offered_packets.is_finite()
        && offered_packets >= 0.0
        && persistent_queue.is_finite()
        && persistent_queue >= 0.0
        && capacity_pps.is_finite()
        && capacity_pps > 0.0;
    let params_valid = params.window > 0.0
        && params.target_utilization > 0.0
        && params.target_utilization <= 1.0
        && params.queue_weight.is_finite()
        && params.queue_weight >= 0.0
        && params.scale.is_finite()
        && params.offset.is_finite();
    if !inputs_valid || !params_valid {
        return fail(
            PcnStatus::InvalidArgument,
            "load-factor inputs must be finite, nonnegative, with positive capacity/window \
             and target utilisation in (0, 1]",
        );
    }
    let load =
        loadfactor::compute_load_factor(offered_packets, persistent_queue, capacity_pps, &params);
    // SAFETY: null-checked above; caller owns the pointee.
    unsafe { *out_load = load };
    PcnStatus::Ok
}

/// Shared guts of `pcn_acf`/`pcn_pacf`.
///
/// # Safety
///
/// Same contract as the public wrappers: `series` readable for `len`
/// doubles, `out_values` writable for `max_lag + 1`.
unsafe fn correlogram(
    series: *const f64,
    len: usize,
    max_lag: usize,
    out_values: *mut f64,
    out_band: *mut f64,
    compute: fn(&[f64], usize) -> pcn::Result<forecast::AcfResult>,
) -> PcnStatus {
    if series.is_null() || out_values.is_null() || out_band.is_null() {
        return fail(PcnStatus::NullArgument, "series/out_values/out_band is null");
    }
    if len == 0 {
        return fail(PcnStatus::InvalidArgument, "series is empty");
    }
    // SAFETY: caller promises `series` points at `len` readable doubles.
    let series = unsafe { std::slice::from_raw_parts(series, len) };
    match compute(series, max_lag) {
        Ok(result) => {
            debug_assert_eq!(result.values.len(), max_lag + 1);
            // SAFETY: caller promises room for `max_lag + 1` doubles.
            unsafe {
                std::ptr::copy_nonoverlapping(result.values.as_ptr(), out_values, max_lag + 1);
                *out_band = result.band;
            }
            PcnStatus::Ok
        }
        Err(e) => fail_error(e),
    }
}

/// Sample autocorrelation of `series` at lags `0..=max_lag`.
///
/// `out_values` must have room for `max_lag + 1` doubles (index = lag,
/// lag 0 is always 1). `out_band` receives the white-noise 95% band
/// `1.96 / sqrt(len)`. Requires `len > max_lag` and a finite series.
///
/// # Safety
///
/// `series` must be readable for `len` doubles and `out_values` writable
/// for `max_lag + 1`; `out_band` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcn_acf(
    series: *const f64,
    len: usize,
    max_lag: usize,
    out_values: *mut f64,
    out_band: *mut f64,
) -> PcnStatus {
    // SAFETY: forwarded caller contract.
    unsafe { correlogram(series, len, max_lag, out_values, out_band, forecast::acf) }
}

/// Sample partial autocorrelation of `series` at lags `0..=max_lag`, same
/// contract as `pcn_acf`.
///
/// # Safety
///
/// Same as `pcn_acf`.
#[no_mangle]
pub unsafe extern "C" fn pcn_pacf(
    series: *const f64,
    len: usize,
    max_lag: usize,
    out_values: *mut f64,
    out_band: *mut f64,
) -> PcnStatus {
    // SAFETY: forwarded caller contract.
    unsafe { correlogram(series, len, max_lag, out_values, out_band, forecast::pacf) }
}

/// Fit a once-integrated first-order moving-average model to `series` by
/// conditional least squares on the differenced values.
///
/// Requires at least 20 points. Writes the invertible coefficient
/// (negative under positive autocorrelation of the level) and the
/// residual variance of the fit.
///
/// # Safety
///
/// `series` must be readable for `len` doubles; the out pointers, when
/// non-null, must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcn_fit_arima011(
    series: *const f64,
    len: usize,
    out_theta: *mut f64,
    out_residual_variance: *mut f64,
) -> PcnStatus {
    if series.is_null() || out_theta.is_null() || out_residual_variance.is_null() {
        return fail(
            PcnStatus::NullArgument,
            "series/out_theta/out_residual_variance is null",
        );
    }
    if len == 0 {
        return fail(PcnStatus::InvalidArgument, "series is empty");
    }
    // SAFETY: caller promises `series` points at `len` readable doubles.
    let series = unsafe { std::slice::from_raw_parts(series, len) };
    match forecast::fit_arima011(series) {
        Ok(fit) => {
            // SAFETY: null-checked above; caller owns the pointees.
            unsafe {
                *out_theta = fit.theta;
                *out_residual_variance = fit.residual_variance;
            }
            PcnStatus::Ok
        }
        Err(e) => fail_error(e),
    }
}

/// Streaming one-step forecaster for load-estimate series (opaque).
pub struct PcnForecaster {
    inner: ForecastState,
}

/// Create a forecaster with a fixed moving-average coefficient
/// (`|theta| < 1`; pass 0 for the crude repeat-last-value predictor).
/// The handle must be released with `pcn_forecaster_free`.
///
/// # Safety
///
/// `out_handle`, when non-null, must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcn_forecaster_new(
    theta: f64,
    out_handle: *mut *mut PcnForecaster,
) -> PcnStatus {
    if out_handle.is_null() {
        return fail(PcnStatus::NullArgument, "out_handle is null");
    }
    if !(theta.is_finite() && theta.abs() < 1.0) {
        return fail(
            PcnStatus::InvalidArgument,
            "coefficient must be finite with |theta| < 1",
        );
    }
    let handle = Box::new(PcnForecaster {
        inner: ForecastState::new(theta),
    });
    // SAFETY: null-checked above; caller owns the pointee.
    unsafe { *out_handle = Box::into_raw(handle) };
    PcnStatus::Ok
}

/// Fold in the estimate observed for the period that just closed and
/// return the forecast for the next one, clipped to `[0, 100]`.
///
/// # Safety
///
/// `handle` must come from `pcn_forecaster_new` and not have been freed;
/// `out_forecast`, when non-null, must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcn_forecaster_observe(
    handle: *mut PcnForecaster,
    value: f64,
    out_forecast: *mut f64,
) -> PcnStatus {
    if handle.is_null() || out_forecast.is_null() {
        return fail(PcnStatus::NullArgument, "handle/out_forecast is null");
    }
    if !value.is_finite() {
        return fail(PcnStatus::InvalidArgument, "observation must be finite");
    }
    // SAFETY: `handle` came from `pcn_forecaster_new` and is not freed.
    let forecaster = unsafe { &mut *handle };
    let forecast = forecaster.inner.observe(value);
    // SAFETY: null-checked above; caller owns the pointee.
    unsafe { *out_forecast = forecast };
    PcnStatus::Ok
}

/// Release a forecaster handle. Passing null is a no-op.
///
/// # Safety
///
/// `handle` must come from `pcn_forecaster_new` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn pcn_forecaster_free(handle: *mut PcnForecaster) {
    if !handle.is_null() {
        // SAFETY: `handle` came from `pcn_forecaster_new`, freed only once.
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Run a full simulation: load the scenario at `config_path`, simulate it
/// under `seed`, and write the artifact directory (five CSV logs, the
/// scenario copy, and a manifest) to `out_dir`, creating it if needed.
///
/// Paths must be valid UTF-8. Scenario problems yield
/// `PCN_STATUS_INVALID_ARGUMENT`; I/O and engine failures yield
/// `PCN_STATUS_RUNTIME_ERROR`.
///
/// # Safety
///
/// `config_path` and `out_dir`, when non-null, must be NUL-terminated
/// strings.
#[no_mangle]
pub unsafe extern "C" fn pcn_run_simulation(
    config_path: *const c_char,
    seed: u64,
    out_dir: *const c_char,
) -> PcnStatus {
    if config_path.is_null() || out_dir.is_null() {
        return fail(PcnStatus::NullArgument, "config_path/out_dir is null");
    }
    // SAFETY: null-checked above; caller promises NUL-terminated strings.
    let (config_path, out_dir) = unsafe { (CStr::from_ptr(config_path), CStr::from_ptr(out_dir)) };
    let (Ok(config_path), Ok(out_dir)) = (config_path.to_str(), out_dir.to_str()) else {
        return fail(PcnStatus::InvalidArgument, "paths must be valid UTF-8");
    };

    let outcome = catch_unwind(AssertUnwindSafe(|| -> pcn::Result<()> {
        let config = config::load_config(Path::new(config_path))?;
        let result = engine::run(&config, seed)?;
        let dir = Path::new(out_dir);
        artifacts::write_run_dir(dir, &config.raw_toml, &result)?;
        artifacts::write_manifest(
            dir,
            &artifacts::RunManifest {
                config: config_path.to_string(),
                seed,
                out_dir: out_dir.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                created_unix: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            },
        )?;
        Ok(())
    }));
    match outcome {
        Ok(Ok(())) => PcnStatus::Ok,
        Ok(Err(e)) => fail_error(e),
        Err(_) => fail(PcnStatus::RuntimeError, "simulation panicked"),
    }
}
