//! Power-series (differential transformation) solver for the frequency
//! response model.
//!
//! The trajectory over one window is represented as truncated power series
//! in elapsed time, one coefficient array per state component. Coefficients
//! come from an order-by-order recursion on the model equations; the
//! frequency/WTG algebraic loop is closed at every order with the same
//! factor used by the continuous-time right-hand side. Long horizons are
//! covered by chaining fixed-length windows with exact end-state handoff.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, ModelError, SystemParams, SystemState, WtgModeCoeffs};
use crate::trajectory::{Mode, Trajectory};

#[derive(Debug, Error)]
pub enum DtError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite series coefficient at order {order}")]
    NonFinite { order: usize },
    #[error("in window {window}: {source}")]
    InWindow {
        window: usize,
        #[source]
        source: Box<DtError>,
    },
    #[error("coefficient length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Window length, truncation order and evaluation tail tolerance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    /// Window length, seconds.
    pub window_len: f64,
    /// Truncation order K of the power series.
    pub order_k: usize,
    /// Relative magnitude below which trailing terms are skipped during
    /// evaluation.
    pub tail_tol: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_len: 0.5,
            order_k: 30,
            tail_tol: 1e-14,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), DtError> {
        if !self.window_len.is_finite() || self.window_len <= 0.0 {
            return Err(DtError::InvalidConfig(format!(
                "window_len must be > 0, got {}",
                self.window_len
            )));
        }
        if self.order_k < 1 {
            return Err(DtError::InvalidConfig("order_k must be >= 1".into()));
        }
        if self.tail_tol.is_nan() || self.tail_tol < 0.0 {
            return Err(DtError::InvalidConfig(format!(
                "tail_tol must be >= 0, got {}",
                self.tail_tol
            )));
        }
        Ok(())
    }
}

/// Power-series coefficients of one window, orders 0..=K.
#[derive(Debug, Clone)]
pub struct SeriesCoeffs {
    pub dw: Vec<f64>,
    pub dpm: Vec<f64>,
    pub dpv: Vec<f64>,
    /// One array per turbine.
    pub dwr: Vec<Vec<f64>>,
    /// WTG power output series, one array per turbine.
    pub pgen: Vec<Vec<f64>>,
}

impl SeriesCoeffs {
    /// Truncation order K (arrays have length K + 1).
    pub fn order(&self) -> usize {
        self.dw.len() - 1
    }

    /// State component arrays in the fixed order `[dw, dpm, dpv, dwr..]`.
    pub fn state_components(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.dw, &self.dpm, &self.dpv];
        v.extend(self.dwr.iter().map(|a| a.as_slice()));
        v
    }
}

/// Evaluate a polynomial at `dt` by Horner's scheme, skipping trailing
/// terms whose magnitude falls below `tail_tol` relative to the largest
/// term encountered.
pub fn eval_polynomial(coeffs: &[f64], dt: f64, tail_tol: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    if dt == 0.0 {
        return coeffs[0];
    }
    let mut top = coeffs.len() - 1;
    if tail_tol > 0.0 {
        let mut power = 1.0_f64;
        let mut max_term = 0.0_f64;
        let mut last = 0_usize;
        for (k, &c) in coeffs.iter().enumerate() {
            let term = (c * power).abs();
            max_term = max_term.max(term);
            // The zero check keeps subnormal products out of the hot path.
            if term != 0.0 && term >= tail_tol * max_term {
                last = k;
            }
            power *= dt;
            if power == 0.0 {
                break;
            }
        }
        top = last;
    }
    coeffs[..=top]
        .iter()
        .rev()
        .fold(0.0, |acc, &c| acc * dt + c)
}

/// Order-k coefficients of the product of two series (the generic DT
/// product rule). Both inputs must have equal length.
pub fn convolve(a: &[f64], b: &[f64]) -> Result<Vec<f64>, DtError> {
    if a.len() != b.len() {
        return Err(DtError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    Ok((0..a.len())
        .map(|k| (0..=k).map(|m| a[m] * b[k - m]).sum())
        .collect())
}

/// Power-series coefficients of the trajectory from `x0` under a constant
/// per-unit imbalance `dpd`, up to order `order_k`.
pub fn dt_recursion(
    x0: &SystemState,
    params: &SystemParams,
    mode: &WtgModeCoeffs,
    dpd: f64,
    order_k: usize,
) -> Result<SeriesCoeffs, DtError> {
    if order_k < 1 {
        return Err(DtError::InvalidConfig("order_k must be >= 1".into()));
    }
    let n = mode.len();
    if x0.dwr.len() != n {
        return Err(DtError::InvalidConfig(format!(
            "state has {} turbines, mode has {n}",
            x0.dwr.len()
        )));
    }
    let gamma = model::closure_factor(params, mode)?;
    let swing = params.swing_gain();
    let droop = params.droop_gain();
    let d_over_ws = params.d / params.omega_s;

    let len = order_k + 1;
    let mut c = SeriesCoeffs {
        dw: vec![0.0; len],
        dpm: vec![0.0; len],
        dpv: vec![0.0; len],
        dwr: vec![vec![0.0; len]; n],
        pgen: vec![vec![0.0; len]; n],
    };
    c.dw[0] = x0.dw;
    c.dpm[0] = x0.dpm;
    c.dpv[0] = x0.dpv;
    for i in 0..n {
        c.dwr[i][0] = x0.dwr[i];
    }

    for k in 0..=order_k {
        let delta = if k == 0 { 1.0 } else { 0.0 };
        let mut static_sum = 0.0;
        for (i, t) in mode.turbines.iter().enumerate() {
            static_sum += t.c * c.dwr[i][k] + t.d2 * c.dw[k];
        }
        // s = (k+1) * dw[k+1], with the feed-through loop closed by gamma.
        let s = gamma * swing * (c.dpm[k] - dpd * delta + static_sum - d_over_ws * c.dw[k]);
        if !s.is_finite() {
            return Err(DtError::NonFinite { order: k + 1 });
        }
        for (i, t) in mode.turbines.iter().enumerate() {
            c.pgen[i][k] = t.c * c.dwr[i][k] + t.d2 * c.dw[k] + t.d1 * s;
        }
        if k < order_k {
            let div = (k + 1) as f64;
            c.dw[k + 1] = s / div;
            c.dpm[k + 1] = ((c.dpv[k] - c.dpm[k]) / params.tau_ch) / div;
            c.dpv[k + 1] = ((-c.dpv[k] - droop * c.dw[k]) / params.tau_g) / div;
            for (i, t) in mode.turbines.iter().enumerate() {
                c.dwr[i][k + 1] = (t.a * c.dwr[i][k] + t.b2 * c.dw[k] + t.b1 * s) / div;
            }
            let finite = c.dpm[k + 1].is_finite()
                && c.dpv[k + 1].is_finite()
                && (0..n).all(|i| c.dwr[i][k + 1].is_finite());
            if !finite {
                return Err(DtError::NonFinite { order: k + 1 });
            }
        }
    }
    Ok(c)
}

/// State at elapsed time `dt` within a window.
pub fn eval_series(coeffs: &SeriesCoeffs, dt: f64, tail_tol: f64) -> SystemState {
    SystemState {
        dw: eval_polynomial(&coeffs.dw, dt, tail_tol),
        dpm: eval_polynomial(&coeffs.dpm, dt, tail_tol),
        dpv: eval_polynomial(&coeffs.dpv, dt, tail_tol),
        dwr: coeffs
            .dwr
            .iter()
            .map(|a| eval_polynomial(a, dt, tail_tol))
            .collect(),
    }
}

/// Total WTG power output at elapsed time `dt` within a window.
pub fn eval_pgen_total(coeffs: &SeriesCoeffs, dt: f64, tail_tol: f64) -> f64 {
    coeffs
        .pgen
        .iter()
        .map(|a| eval_polynomial(a, dt, tail_tol))
        .sum()
}

/// Per-component magnitude of `d/dt(series) - rhs(series)` at elapsed
/// time `dt`; verifies that the truncated series satisfies the model.
pub fn series_residual(
    coeffs: &SeriesCoeffs,
    params: &SystemParams,
    mode: &WtgModeCoeffs,
    dpd: f64,
    dt: f64,
) -> Result<Vec<f64>, DtError> {
    let x = eval_series(coeffs, dt, 0.0);
    let f = model::rhs(&x, params, mode, dpd)?;
    let rhs_components = f.components();
    let mut residuals = Vec::with_capacity(rhs_components.len());
    for (comp, rhs_val) in coeffs.state_components().iter().zip(rhs_components) {
        let deriv: Vec<f64> = comp
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect();
        let d = eval_polynomial(&deriv, dt, 0.0);
        residuals.push((d - rhs_val).abs());
    }
    Ok(residuals)
}

/// Propagate the series solution over `[0, horizon]` with consecutive
/// windows, sampling every state on the global `sample_dt` grid.
pub fn predict_trajectory(
    x0: &SystemState,
    params: &SystemParams,
    mode: &WtgModeCoeffs,
    dpd: f64,
    horizon: f64,
    wc: &WindowConfig,
    sample_dt: f64,
) -> Result<Trajectory, DtError> {
    wc.validate()?;
    if !horizon.is_finite() || horizon <= 0.0 || !sample_dt.is_finite() || sample_dt <= 0.0 {
        return Err(DtError::InvalidConfig(
            "horizon and sample_dt must be > 0".into(),
        ));
    }
    let mode_label = if mode.is_mppt() {
        Mode::Mppt
    } else {
        Mode::Support
    };
    let n_samples = (horizon / sample_dt + 1e-9).floor() as usize;
    let n_windows = ((horizon / wc.window_len - 1e-12).ceil() as usize).max(1);

    let mut times = Vec::with_capacity(n_samples + 1);
    let mut states = Vec::with_capacity(n_samples + 1);
    let mut pgen_total = Vec::with_capacity(n_samples + 1);
    times.push(0.0);
    states.push(x0.clone());

    let mut entry = x0.clone();
    let mut pgen0 = None;
    for w in 0..n_windows {
        let t_start = w as f64 * wc.window_len;
        let wlen = wc.window_len.min(horizon - t_start);
        let coeffs =
            dt_recursion(&entry, params, mode, dpd, wc.order_k).map_err(|e| DtError::InWindow {
                window: w,
                source: Box::new(e),
            })?;
        if w == 0 {
            pgen0 = Some(eval_pgen_total(&coeffs, 0.0, wc.tail_tol));
        }
        let j_lo = (t_start / sample_dt + 1e-9).floor() as usize + 1;
        let j_hi = ((t_start + wlen) / sample_dt + 1e-9).floor() as usize;
        for j in j_lo..=j_hi.min(n_samples) {
            let dt = j as f64 * sample_dt - t_start;
            times.push(j as f64 * sample_dt);
            states.push(eval_series(&coeffs, dt, wc.tail_tol));
            pgen_total.push(eval_pgen_total(&coeffs, dt, wc.tail_tol));
        }
        entry = eval_series(&coeffs, wlen, wc.tail_tol);
    }
    let mut pgen = vec![pgen0.unwrap_or(0.0)];
    pgen.extend(pgen_total);

    let n = times.len();
    Ok(Trajectory {
        times,
        states,
        pgen_total: pgen,
        modes: vec![mode_label; n],
        events: vec![],
    })
}
