//! Time-series tooling for correcting stale load estimates.
//!
//! A source's per-router load estimates are one reporting period old by
//! the time they can be acted on. Treating the estimate series as an
//! ARIMA(0,1,1) process — a random walk disturbed by first-order
//! moving-average noise, a good match for slowly drifting load measured
//! through sampling noise — its one-step-ahead forecast gives a cheap,
//! recursively computable correction:
//!
//! ```text
//! forecast(t+1) = x(t) + θ · (x(t) − forecast(t))
//! ```
//!
//! which is exponential smoothing with factor `1 + θ`. With `θ = 0` the
//! forecast degenerates to "predict the last observation", i.e. using the
//! raw estimate unchanged, so the corrected estimator strictly generalises
//! the raw one.
//!
//! The module provides the identification diagnostics (sample ACF/PACF of
//! the differenced series, with significance bands), a conditional
//! sum-of-squares fit of the moving-average coefficient, and the streaming
//! forecaster itself.

use crate::{Error, Result};

/// Minimum number of observations required to fit the moving-average
/// coefficient.
pub const MIN_FIT_LEN: usize = 20;

/// Load estimates are percentages; forecasts are clipped to this range.
const CLIP: (f64, f64) = (0.0, 100.0);

fn ensure_finite(series: &[f64]) -> Result<()> {
    if let Some(pos) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::Series(format!(
            "non-finite value at index {pos}"
        )));
    }
    Ok(())
}

/// `order`-fold first differences; the result is shorter by `order`.
///
/// One application maps `x` to `out[t] = x[t + 1] - x[t]`; higher orders
/// repeat it. Errors when the series is too short to difference.
pub fn difference(series: &[f64], order: usize) -> Result<Vec<f64>> {
    if series.len() <= order {
        return Err(Error::Series(format!(
            "cannot difference {} observations {order} times",
            series.len()
        )));
    }
    let mut out = series.to_vec();
    for _ in 0..order {
        out = diff1(&out);
    }
    Ok(out)
}

/// Single first-difference pass.
fn diff1(series: &[f64]) -> Vec<f64> {
    series.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Sample autocorrelation function with its significance band.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfResult {
    /// `values[k]` is the autocorrelation at lag `k`; `values[0]` is 1.
    pub values: Vec<f64>,
    /// Two-sided 95 % band `1.96 / sqrt(n)`: lags whose magnitude stays
    /// inside are indistinguishable from white noise.
    pub band: f64,
}

/// Sample autocorrelation of `series` for lags `0..=max_lag`.
///
/// Uses the standard biased estimator (sums divided by the full series
/// length and centred on the overall mean), which keeps the sequence
/// positive semi-definite for the partial-autocorrelation recursion.
pub fn acf(series: &[f64], max_lag: usize) -> Result<AcfResult> {
    ensure_finite(series)?;
    let n = series.len();
    if n < 2 {
        return Err(Error::Series(
            "autocorrelation needs at least 2 observations".into(),
        ));
    }
    if max_lag >= n {
        return Err(Error::Series(format!(
            "max lag {max_lag} must be below the series length {n}"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let denom: f64 = series.iter().map(|v| (v - mean).powi(2)).sum();
    if denom == 0.0 {
        return Err(Error::Series(
            "series has zero variance; autocorrelation is undefined".into(),
        ));
    }
    let mut values = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let num: f64 = (0..n - k)
            .map(|t| (series[t] - mean) * (series[t + k] - mean))
            .sum();
        values.push(num / denom);
    }
    Ok(AcfResult {
        values,
        band: 1.96 / (n as f64).sqrt(),
    })
}

/// Partial autocorrelations derived from an autocorrelation sequence via
/// the Durbin–Levinson recursion. `rho[0]` must be 1; the result mirrors
/// the layout (`out[0] = 1`, `out[k]` = PACF at lag `k`).
fn pacf_from_acf(rho: &[f64]) -> Vec<f64> {
    let max_lag = rho.len() - 1;
    let mut out = vec![1.0];
    if max_lag == 0 {
        return out;
    }
    // phi[j] holds the order-k AR coefficients phi_{k,j+1}.
    let mut phi = vec![rho[1]];
    out.push(rho[1]);
    for k in 2..=max_lag {
        let num = rho[k] - (0..k - 1).map(|j| phi[j] * rho[k - 1 - j]).sum::<f64>();
        let den = 1.0 - (0..k - 1).map(|j| phi[j] * rho[j + 1]).sum::<f64>();
        let phi_kk = if den.abs() < 1e-12 { 0.0 } else { num / den };
        let prev = phi.clone();
        for j in 0..k - 1 {
            phi[j] = prev[j] - phi_kk * prev[k - 2 - j];
        }
        phi.push(phi_kk);
        out.push(phi_kk);
    }
    out
}

/// Sample partial autocorrelation of `series` for lags `0..=max_lag`,
/// computed from the sample ACF by the Durbin–Levinson recursion. Shares
/// the [`AcfResult`] layout and significance band.
pub fn pacf(series: &[f64], max_lag: usize) -> Result<AcfResult> {
    let rho = acf(series, max_lag)?;
    Ok(AcfResult {
        values: pacf_from_acf(&rho.values),
        band: rho.band,
    })
}

/// A fitted ARIMA(0,1,1) model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedMa1 {
    /// Moving-average coefficient of the differenced series.
    pub theta: f64,
    /// Mean squared one-step residual of the fit.
    pub residual_variance: f64,
}

/// Conditional sum of squares of the MA(1) coefficient `theta` on a
/// differenced series: residuals follow `e[t] = d[t] - theta * e[t-1]`
/// with `e` starting at zero.
fn css(diffs: &[f64], theta: f64) -> f64 {
    let mut prev = 0.0;
    let mut sse = 0.0;
    for &d in diffs {
        let e = d - theta * prev;
        sse += e * e;
        prev = e;
    }
    sse
}

/// Fit the moving-average coefficient of an ARIMA(0,1,1) model to a raw
/// (undifferenced) series by conditional sum of squares.
///
/// The sum of squares is scanned on a 0.01 grid over the invertible range
/// `[-0.99, 0.99]` and the best cell is refined by ternary search. A
/// series whose differences are all zero carries no information about
/// `theta`; it fits as 0 (the forecaster then degenerates to repeating
/// the last value, which is exact for a constant series).
pub fn fit_arima011(series: &[f64]) -> Result<FittedMa1> {
    ensure_finite(series)?;
    if series.len() < MIN_FIT_LEN {
        return Err(Error::Series(format!(
            "need at least {MIN_FIT_LEN} observations to fit, got {}",
            series.len()
        )));
    }
    let diffs = diff1(series);
    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(FittedMa1 {
            theta: 0.0,
            residual_variance: 0.0,
        });
    }

    let mut best_theta = 0.0;
    let mut best_sse = f64::INFINITY;
    for step in -99..=99i32 {
        let theta = step as f64 / 100.0;
        let sse = css(&diffs, theta);
        if sse < best_sse {
            best_sse = sse;
            best_theta = theta;
        }
    }
    // Refine inside the winning grid cell's neighbourhood.
    let mut lo = (best_theta - 0.01).max(-0.99);
    let mut hi = (best_theta + 0.01).min(0.99);
    for _ in 0..60 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if css(&diffs, m1) <= css(&diffs, m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let theta = (lo + hi) / 2.0;
    Ok(FittedMa1 {
        theta,
        residual_variance: css(&diffs, theta) / diffs.len() as f64,
    })
}

/// Streaming one-step-ahead ARIMA(0,1,1) forecaster.
///
/// Feed each new observation to [`ForecastState::observe`]; it returns the
/// forecast for the *next* observation, clipped to the percentage range.
/// The very first observation is its own best forecast (there is no
/// residual yet).
#[derive(Debug, Clone, Copy)]
pub struct ForecastState {
    theta: f64,
    last_forecast: Option<f64>,
    last_residual: f64,
}

impl ForecastState {
    /// Forecaster with a fixed moving-average coefficient (invertibility
    /// requires `|theta| < 1`; the fitting routine stays within that).
    pub fn new(theta: f64) -> Self {
        ForecastState {
            theta,
            last_forecast: None,
            last_residual: 0.0,
        }
    }

    /// The coefficient this forecaster runs with.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// The standing forecast for the upcoming observation, if one has
    /// been issued yet.
    pub fn last_forecast(&self) -> Option<f64> {
        self.last_forecast
    }

    /// Most recent one-step residual (observation minus the forecast it
    /// met); zero before the second observation.
    pub fn last_residual(&self) -> f64 {
        self.last_residual
    }

    /// Fold in the observation for the period that just closed and return
    /// the forecast for the next one.
    pub fn observe(&mut self, value: f64) -> f64 {
        let forecast = match self.last_forecast {
            None => value.clamp(CLIP.0, CLIP.1),
            Some(prev) => {
                self.last_residual = value - prev;
                (value + self.theta * self.last_residual).clamp(CLIP.0, CLIP.1)
            }
        };
        self.last_forecast = Some(forecast);
        forecast
    }
}

/// One-step-ahead forecasts over a whole series: `out[t]` is the forecast
/// of `series[t + 1]` issued after observing `series[..=t]`. Equivalent to
/// streaming the series through [`ForecastState`].
pub fn one_step_forecasts(series: &[f64], theta: f64) -> Vec<f64> {
    let mut state = ForecastState::new(theta);
    series.iter().map(|&v| state.observe(v)).collect()
}
