//! Fixed-step 4th-order numerical oracle and closed-loop hybrid simulation
//! with event-located mode switching.
//!
//! Kept deliberately independent of the power-series engine: both consume
//! the same model right-hand side, but the integration paths never share
//! code, so cross-checking one against the other is meaningful.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, ModelError, SystemParams, SystemState, WtgModeCoeffs};
use crate::strategies::{self, SafetyLimits, StrategyError, StrategyKind};
use crate::trajectory::{Mode, SwitchEvent, Trajectory};

/// Event-time location tolerance, seconds.
const EVENT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite state at t = {time} s")]
    NonFinite { time: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("strategy failed: {0}")]
    Strategy(Box<StrategyError>),
}

impl From<StrategyError> for SimError {
    fn from(e: StrategyError) -> Self {
        SimError::Strategy(Box::new(e))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    /// Integration step, seconds.
    pub step: f64,
    /// Simulated horizon, seconds.
    pub horizon: f64,
    /// Dense-output sample spacing, seconds; must be a multiple of `step`.
    pub sample_dt: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            horizon: 20.0,
            sample_dt: 1e-2,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let ordered =
            self.step > 0.0 && self.step <= self.sample_dt && self.sample_dt <= self.horizon;
        if !ordered {
            return Err(SimError::InvalidConfig(format!(
                "need 0 < step <= sample_dt <= horizon, got step={} sample_dt={} horizon={}",
                self.step, self.sample_dt, self.horizon
            )));
        }
        let spr = (self.sample_dt / self.step).round();
        if (spr * self.step - self.sample_dt).abs() > 1e-9 * self.sample_dt {
            return Err(SimError::InvalidConfig(format!(
                "sample_dt={} is not a multiple of step={}",
                self.sample_dt, self.step
            )));
        }
        Ok(())
    }

    fn steps_per_sample(&self) -> usize {
        (self.sample_dt / self.step).round() as usize
    }

    fn n_samples(&self) -> usize {
        (self.horizon / self.sample_dt + 1e-9).floor() as usize
    }
}

/// Normal and frequency-support coefficient sets for the same fleet.
#[derive(Debug, Clone)]
pub struct ModePair {
    pub mppt: WtgModeCoeffs,
    pub support: WtgModeCoeffs,
}

impl ModePair {
    /// Derives the MPPT set by zeroing the support gains.
    pub fn from_support(support: WtgModeCoeffs) -> Self {
        Self {
            mppt: support.to_mppt(),
            support,
        }
    }

    pub fn get(&self, mode: Mode) -> &WtgModeCoeffs {
        match mode {
            Mode::Mppt => &self.mppt,
            Mode::Support => &self.support,
        }
    }
}

fn rk4_step(
    x: &SystemState,
    params: &SystemParams,
    mode: &WtgModeCoeffs,
    dpd: f64,
    h: f64,
) -> Result<SystemState, ModelError> {
    let k1 = model::rhs(x, params, mode, dpd)?;
    let k2 = model::rhs(&x.scaled_add(&k1, h / 2.0), params, mode, dpd)?;
    let k3 = model::rhs(&x.scaled_add(&k2, h / 2.0), params, mode, dpd)?;
    let k4 = model::rhs(&x.scaled_add(&k3, h), params, mode, dpd)?;
    let mut out = x.scaled_add(&k1, h / 6.0);
    out = out.scaled_add(&k2, h / 3.0);
    out = out.scaled_add(&k3, h / 3.0);
    Ok(out.scaled_add(&k4, h / 6.0))
}

fn pgen_at(
    x: &SystemState,
    params: &SystemParams,
    mode: &WtgModeCoeffs,
    dpd: f64,
) -> Result<f64, ModelError> {
    let dw_dot = model::rhs(x, params, mode, dpd)?.dw;
    Ok(model::wtg_power_output(x, dw_dot, mode))
}

/// Open-loop fixed-step integration under a single operating mode.
pub fn integrate_fixed(
    x0: &SystemState,
    params: &SystemParams,
    mode: &WtgModeCoeffs,
    dpd: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    let label = if mode.is_mppt() {
        Mode::Mppt
    } else {
        Mode::Support
    };
    let spr = cfg.steps_per_sample();
    let n_samples = cfg.n_samples();

    let mut times = Vec::with_capacity(n_samples + 1);
    let mut states = Vec::with_capacity(n_samples + 1);
    let mut pgen = Vec::with_capacity(n_samples + 1);
    times.push(0.0);
    states.push(x0.clone());
    pgen.push(pgen_at(x0, params, mode, dpd)?);

    let mut x = x0.clone();
    for j in 1..=n_samples {
        for i in 0..spr {
            x = rk4_step(&x, params, mode, dpd, cfg.step)?;
            if !x.is_finite() {
                let t = (j - 1) as f64 * cfg.sample_dt + (i + 1) as f64 * cfg.step;
                return Err(SimError::NonFinite { time: t });
            }
        }
        times.push(j as f64 * cfg.sample_dt);
        pgen.push(pgen_at(&x, params, mode, dpd)?);
        states.push(x.clone());
    }

    let n = times.len();
    Ok(Trajectory {
        times,
        states,
        pgen_total: pgen,
        modes: vec![label; n],
        events: vec![],
    })
}

fn drop_mag(dw: f64) -> f64 {
    (-dw).max(0.0)
}

/// Locate the first time within `[t, t + h]` at which the drop magnitude
/// reaches `width`, by bisection on the step fraction. Returns the crossing
/// offset and the state there.
fn locate_crossing(
    x: &SystemState,
    params: &SystemParams,
    mode: &WtgModeCoeffs,
    dpd: f64,
    h: f64,
    width: f64,
) -> Result<(f64, SystemState), ModelError> {
    if drop_mag(x.dw) >= width && drop_mag(x.dw) > 0.0 {
        return Ok((0.0, x.clone()));
    }
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while (hi - lo) * h > EVENT_TOL {
        let mid = 0.5 * (lo + hi);
        let xm = rk4_step(x, params, mode, dpd, mid * h)?;
        if drop_mag(xm.dw) >= width {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let xe = rk4_step(x, params, mode, dpd, hi * h)?;
    Ok((hi * h, xe))
}

/// Closed-loop simulation: starts in MPPT with the step disturbance applied
/// and switches to the support mode when the configured strategy demands it.
/// At most one switch occurs per run; the state is continuous across it.
pub fn simulate_closed_loop(
    x0: &SystemState,
    params: &SystemParams,
    modes: &ModePair,
    dpd: f64,
    strategy: &StrategyKind,
    limits: &SafetyLimits,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, SimError> {
    cfg.validate()?;

    // Trigger width armed for in-loop deadband crossing, or a scheduled
    // switch instant for the predictive strategy.
    let mut trigger_width: Option<f64> = None;
    let mut switch_at: Option<f64> = None;
    let mut trigger_desc = String::new();

    match strategy {
        StrategyKind::FixedDeadband { width } => {
            let d = strategies::deadband_decide(x0.dw, *width);
            trigger_desc = format!("deadband width {width} Hz crossed");
            if d.mode == Mode::Support {
                switch_at = Some(0.0);
            } else {
                trigger_width = Some(*width);
            }
        }
        StrategyKind::CriticalDeadband => {
            let crit = strategies::compute_critical_deadband(dpd, params, modes, limits, cfg)?;
            match crit {
                strategies::CriticalWidth::NoSwitchNeeded => {}
                strategies::CriticalWidth::Width(w) => {
                    trigger_desc = format!("critical deadband width {w:.4} Hz crossed");
                    let d = strategies::deadband_decide(x0.dw, w);
                    if d.mode == Mode::Support {
                        switch_at = Some(0.0);
                    } else {
                        trigger_width = Some(w);
                    }
                }
            }
        }
        StrategyKind::Predictive {
            horizon,
            window,
            decision_delay,
        } => {
            let d = strategies::predictive_decide(
                x0,
                dpd,
                params,
                &modes.mppt,
                limits,
                *horizon,
                window,
                cfg.sample_dt,
            )?;
            if d.mode == Mode::Support {
                trigger_desc = format!(
                    "predicted drop exceeds limit {} Hz at t+{:.3} s",
                    limits.dw_lim,
                    d.first_violation_time.unwrap_or(0.0)
                );
                switch_at = Some(*decision_delay);
            }
        }
    }

    let spr = cfg.steps_per_sample();
    let n_samples = cfg.n_samples();
    let mut mode = Mode::Mppt;
    let mut events = Vec::new();
    let mut x = x0.clone();

    if switch_at == Some(0.0) {
        events.push(SwitchEvent {
            time: 0.0,
            from: Mode::Mppt,
            to: Mode::Support,
            trigger: trigger_desc.clone(),
        });
        mode = Mode::Support;
        switch_at = None;
    }

    let mut times = Vec::with_capacity(n_samples + 1);
    let mut states = Vec::with_capacity(n_samples + 1);
    let mut pgen = Vec::with_capacity(n_samples + 1);
    let mut mode_row = Vec::with_capacity(n_samples + 1);
    times.push(0.0);
    states.push(x.clone());
    pgen.push(pgen_at(&x, params, modes.get(mode), dpd)?);
    mode_row.push(mode);

    for j in 1..=n_samples {
        for i in 0..spr {
            let t = (j - 1) as f64 * cfg.sample_dt + i as f64 * cfg.step;
            let h = cfg.step;

            // Scheduled predictive switch inside this step.
            if let Some(ts) = switch_at {
                if mode == Mode::Mppt && ts <= t + h {
                    let dt1 = (ts - t).max(0.0);
                    if dt1 > 0.0 {
                        x = rk4_step(&x, params, modes.get(mode), dpd, dt1)?;
                    }
                    events.push(SwitchEvent {
                        time: ts.max(t),
                        from: Mode::Mppt,
                        to: Mode::Support,
                        trigger: trigger_desc.clone(),
                    });
                    mode = Mode::Support;
                    switch_at = None;
                    x = rk4_step(&x, params, modes.get(mode), dpd, h - dt1)?;
                    continue;
                }
            }

            let x_new = rk4_step(&x, params, modes.get(mode), dpd, h)?;
            if let Some(width) = trigger_width {
                let d_new = drop_mag(x_new.dw);
                if mode == Mode::Mppt && d_new >= width && d_new > 0.0 {
                    let (dt_e, xe) = locate_crossing(&x, params, modes.get(mode), dpd, h, width)?;
                    events.push(SwitchEvent {
                        time: t + dt_e,
                        from: Mode::Mppt,
                        to: Mode::Support,
                        trigger: trigger_desc.clone(),
                    });
                    mode = Mode::Support;
                    trigger_width = None;
                    x = rk4_step(&xe, params, modes.get(mode), dpd, h - dt_e)?;
                    continue;
                }
            }
            x = x_new;
            if !x.is_finite() {
                return Err(SimError::NonFinite { time: t + h });
            }
        }
        times.push(j as f64 * cfg.sample_dt);
        pgen.push(pgen_at(&x, params, modes.get(mode), dpd)?);
        states.push(x.clone());
        mode_row.push(mode);
    }

    Ok(Trajectory {
        times,
        states,
        pgen_total: pgen,
        modes: mode_row,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TurbineCoeffs;

    fn params() -> SystemParams {
        SystemParams::default()
    }

    fn pair() -> ModePair {
        ModePair::from_support(WtgModeCoeffs::new(vec![
            TurbineCoeffs::support_default();
            5
        ]))
    }

    fn limits() -> SafetyLimits {
        SafetyLimits { dw_lim: 0.5 }
    }

    #[test]
    fn zero_disturbance_stays_zero() {
        let cfg = IntegratorConfig {
            horizon: 2.0,
            ..Default::default()
        };
        let t = integrate_fixed(&SystemState::zero(5), &params(), &pair().mppt, 0.0, &cfg).unwrap();
        assert!(t.states.iter().all(|s| s.max_abs() == 0.0));
    }

    #[test]
    fn long_run_reaches_analytic_steady_state() {
        let p = params();
        let cfg = IntegratorConfig {
            horizon: 200.0,
            ..Default::default()
        };
        let dpd = 500.0 / 6000.0;
        let t = integrate_fixed(&SystemState::zero(5), &p, &pair().mppt, dpd, &cfg).unwrap();
        let expected = model::steady_state_deviation(&p, dpd);
        let last = t.states.last().unwrap().dw;
        assert!(
            (last - expected).abs() <= 1e-4,
            "got {last}, want {expected}"
        );
    }

    #[test]
    fn step_halving_is_fourth_order_accurate() {
        let p = params();
        let dpd = 1000.0 / 6000.0;
        let nadir = |step: f64| {
            let cfg = IntegratorConfig {
                step,
                horizon: 5.0,
                sample_dt: 1e-2,
            };
            integrate_fixed(&SystemState::zero(5), &p, &pair().mppt, dpd, &cfg)
                .unwrap()
                .nadir()
                .unwrap()
                .1
        };
        let diff = (nadir(1e-3) - nadir(5e-4)).abs();
        assert!(diff <= 1e-9, "nadir changed by {diff}");
    }

    #[test]
    fn never_triggering_deadband_matches_open_loop() {
        let p = params();
        let modes = pair();
        let dpd = 1000.0 / 6000.0;
        let cfg = IntegratorConfig::default();
        let open = integrate_fixed(&SystemState::zero(5), &p, &modes.mppt, dpd, &cfg).unwrap();
        let closed = simulate_closed_loop(
            &SystemState::zero(5),
            &p,
            &modes,
            dpd,
            &StrategyKind::FixedDeadband {
                width: f64::INFINITY,
            },
            &limits(),
            &cfg,
        )
        .unwrap();
        assert!(closed.events.is_empty());
        for (a, b) in open.states.iter().zip(&closed.states) {
            assert!(a.scaled_add(b, -1.0).max_abs() == 0.0);
        }
    }

    #[test]
    fn deadband_switch_happens_at_crossing() {
        let p = params();
        let modes = pair();
        let dpd = 500.0 / 6000.0;
        let cfg = IntegratorConfig::default();
        let t = simulate_closed_loop(
            &SystemState::zero(5),
            &p,
            &modes,
            dpd,
            &StrategyKind::FixedDeadband { width: 0.2 },
            &limits(),
            &cfg,
        )
        .unwrap();
        assert_eq!(t.events.len(), 1);
        let ev = &t.events[0];
        assert_eq!(ev.from, Mode::Mppt);
        assert_eq!(ev.to, Mode::Support);
        // Crossing state should sit on the threshold to within the event
        // tolerance times the local slope (|dw_dot| < 1.3 Hz/s here).
        let x_before = &t.states[(ev.time / cfg.sample_dt) as usize];
        assert!(
            (drop_mag(x_before.dw) - 0.2).abs() < 0.01,
            "drop near event sample: {}",
            drop_mag(x_before.dw)
        );
    }

    #[test]
    fn support_from_start_reduces_nadir() {
        let p = params();
        let modes = pair();
        let dpd = 1000.0 / 6000.0;
        let cfg = IntegratorConfig::default();
        let mppt = integrate_fixed(&SystemState::zero(5), &p, &modes.mppt, dpd, &cfg).unwrap();
        let sup = integrate_fixed(&SystemState::zero(5), &p, &modes.support, dpd, &cfg).unwrap();
        assert!(sup.nadir_drop() < mppt.nadir_drop());
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = IntegratorConfig {
            step: 0.02,
            sample_dt: 0.01,
            horizon: 1.0,
        };
        assert!(cfg.validate().is_err());
        let cfg = IntegratorConfig {
            step: 3e-3,
            sample_dt: 1e-2,
            horizon: 1.0,
        };
        assert!(cfg.validate().is_err());
    }
}
