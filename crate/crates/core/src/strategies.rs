//! Switching decision rules: fixed deadband, critical deadband (width found
//! by simulation-based bisection) and the predictive rule built on the
//! power-series engine.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dt_engine::{self, DtError, WindowConfig};
use crate::integrator::{self, IntegratorConfig, ModePair, SimError};
use crate::model::{SystemParams, SystemState, WtgModeCoeffs};
use crate::trajectory::Mode;

/// Bisection tolerance on the critical width, Hz.
const WIDTH_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Sim(Box<SimError>),
    #[error(transparent)]
    Dt(#[from] DtError),
    #[error("frequency response violates the limit even when support is activated immediately (dpd = {dpd} pu)")]
    UnsafeEvenWithSupport { dpd: f64 },
}

impl From<SimError> for StrategyError {
    fn from(e: SimError) -> Self {
        StrategyError::Sim(Box::new(e))
    }
}

/// Safety limit on the under-frequency drop magnitude.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyLimits {
    /// Maximum tolerable drop, Hz (positive magnitude).
    pub dw_lim: f64,
}

impl Default for SafetyLimits {
    fn default() -> Self {
        Self { dw_lim: 0.5 }
    }
}

impl SafetyLimits {
    pub fn validate(&self) -> Result<(), String> {
        if !self.dw_lim.is_finite() || self.dw_lim <= 0.0 {
            return Err(format!("dw_lim must be > 0, got {}", self.dw_lim));
        }
        Ok(())
    }
}

/// Which switching rule a closed-loop run follows.
#[derive(Debug, Clone)]
pub enum StrategyKind {
    /// Preset deadband on the frequency drop, Hz.
    FixedDeadband { width: f64 },
    /// Largest safe deadband for the given disturbance, found by bisection.
    CriticalDeadband,
    /// Predict the no-support response at detection time and switch only
    /// when it is predicted to violate the limit.
    Predictive {
        /// Prediction horizon, seconds.
        horizon: f64,
        window: WindowConfig,
        /// Delay between detection and support activation, seconds.
        decision_delay: f64,
    },
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::FixedDeadband { .. } => "deadband",
            StrategyKind::CriticalDeadband => "critical_deadband",
            StrategyKind::Predictive { .. } => "predictive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    BelowThreshold,
    AboveThreshold,
    PredictedSafe,
    PredictedUnsafe,
}

/// Verdict of a decision rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Decision {
    pub mode: Mode,
    pub trigger: Trigger,
    /// Predicted minimum frequency deviation, Hz. Predictive rule only.
    pub predicted_nadir: Option<f64>,
    /// First predicted time at which the drop reaches the limit, seconds
    /// after detection. Predictive rule only, when unsafe.
    pub first_violation_time: Option<f64>,
}

/// Under-frequency drop magnitude of a deviation measured in Hz.
pub fn drop_magnitude(dw: f64) -> f64 {
    (-dw).max(0.0)
}

/// Fixed-deadband rule: stay in MPPT while the measured drop is inside the
/// band. A zero drop never triggers; ties at the band edge switch.
pub fn deadband_decide(dw_t0: f64, width: f64) -> Decision {
    let drop = drop_magnitude(dw_t0);
    if drop > 0.0 && drop >= width {
        Decision {
            mode: Mode::Support,
            trigger: Trigger::AboveThreshold,
            predicted_nadir: None,
            first_violation_time: None,
        }
    } else {
        Decision {
            mode: Mode::Mppt,
            trigger: Trigger::BelowThreshold,
            predicted_nadir: None,
            first_violation_time: None,
        }
    }
}

/// Result of the critical-width computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CriticalWidth {
    /// The no-support response already respects the limit.
    NoSwitchNeeded,
    /// Largest deadband width (Hz) that still keeps the closed-loop
    /// response within the limit, to bisection tolerance.
    Width(f64),
}

/// Largest safe deadband width for the given disturbance, by bisection on
/// closed-loop simulations. Safety is assumed monotone in the width over
/// the bracket `[0, MPPT nadir drop]`.
pub fn compute_critical_deadband(
    dpd: f64,
    params: &SystemParams,
    modes: &ModePair,
    limits: &SafetyLimits,
    cfg: &IntegratorConfig,
) -> Result<CriticalWidth, StrategyError> {
    if dpd == 0.0 {
        return Ok(CriticalWidth::NoSwitchNeeded);
    }
    let x0 = SystemState::zero(modes.mppt.len());
    let open = integrator::integrate_fixed(&x0, params, &modes.mppt, dpd, cfg)?;
    let drop_mppt = open.nadir_drop();
    if drop_mppt <= limits.dw_lim {
        return Ok(CriticalWidth::NoSwitchNeeded);
    }

    let is_safe = |width: f64| -> Result<bool, StrategyError> {
        let traj = integrator::simulate_closed_loop(
            &x0,
            params,
            modes,
            dpd,
            &StrategyKind::FixedDeadband { width },
            limits,
            cfg,
        )?;
        Ok(traj.nadir_drop() <= limits.dw_lim)
    };

    if !is_safe(0.0)? {
        return Err(StrategyError::UnsafeEvenWithSupport { dpd });
    }
    let mut lo = 0.0;
    let mut hi = drop_mppt;
    while hi - lo > WIDTH_TOL {
        let mid = 0.5 * (lo + hi);
        if is_safe(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalWidth::Width(lo))
}

/// Critical-deadband rule applied as an instant check at detection time.
pub fn critical_decide(dw_t0: f64, crit: &CriticalWidth) -> Decision {
    match crit {
        CriticalWidth::NoSwitchNeeded => Decision {
            mode: Mode::Mppt,
            trigger: Trigger::BelowThreshold,
            predicted_nadir: None,
            first_violation_time: None,
        },
        CriticalWidth::Width(w) => deadband_decide(dw_t0, *w),
    }
}

/// Predictive rule: run the series predictor under the current (MPPT)
/// coefficients and stay in MPPT only if the predicted drop stays below
/// the limit at every sample of the horizon.
#[allow(clippy::too_many_arguments)]
pub fn predictive_decide(
    x_t0: &SystemState,
    dpd: f64,
    params: &SystemParams,
    mppt_mode: &WtgModeCoeffs,
    limits: &SafetyLimits,
    horizon: f64,
    wc: &WindowConfig,
    sample_dt: f64,
) -> Result<Decision, StrategyError> {
    let traj = dt_engine::predict_trajectory(x_t0, params, mppt_mode, dpd, horizon, wc, sample_dt)?;
    let (_, nadir_dw) = traj.nadir().expect("non-empty prediction");
    let violation = traj
        .times
        .iter()
        .zip(&traj.states)
        .find(|(_, s)| drop_magnitude(s.dw) >= limits.dw_lim)
        .map(|(&t, _)| t);
    Ok(match violation {
        None => Decision {
            mode: Mode::Mppt,
            trigger: Trigger::PredictedSafe,
            predicted_nadir: Some(nadir_dw),
            first_violation_time: None,
        },
        Some(t) => Decision {
            mode: Mode::Support,
            trigger: Trigger::PredictedUnsafe,
            predicted_nadir: Some(nadir_dw),
            first_violation_time: Some(t),
        },
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

    #[test]
    fn deadband_examples() {
        assert_eq!(deadband_decide(-0.1, 0.2).mode, Mode::Mppt);
        assert_eq!(deadband_decide(-0.3, 0.2).mode, Mode::Support);
        // Equality goes to the "otherwise" branch.
        assert_eq!(deadband_decide(-0.2, 0.2).mode, Mode::Support);
    }

    #[test]
    fn deadband_zero_width() {
        assert_eq!(deadband_decide(-1e-9, 0.0).mode, Mode::Support);
        assert_eq!(deadband_decide(0.0, 0.0).mode, Mode::Mppt);
        assert_eq!(deadband_decide(0.3, 0.0).mode, Mode::Mppt);
    }

    #[test]
    fn critical_decide_examples() {
        assert_eq!(
            critical_decide(-5.0, &CriticalWidth::NoSwitchNeeded).mode,
            Mode::Mppt
        );
        assert_eq!(
            critical_decide(-0.1, &CriticalWidth::Width(0.35)).mode,
            Mode::Mppt
        );
        assert_eq!(
            critical_decide(-0.4, &CriticalWidth::Width(0.35)).mode,
            Mode::Support
        );
    }

    #[test]
    fn no_disturbance_needs_no_switch() {
        let crit = compute_critical_deadband(
            0.0,
            &params(),
            &pair(),
            &SafetyLimits::default(),
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_eq!(crit, CriticalWidth::NoSwitchNeeded);
    }

    #[test]
    fn safe_scenario_needs_no_switch() {
        let crit = compute_critical_deadband(
            500.0 / 6000.0,
            &params(),
            &pair(),
            &SafetyLimits::default(),
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_eq!(crit, CriticalWidth::NoSwitchNeeded);
    }

    #[test]
    fn predictive_zero_state_is_safe() {
        let d = predictive_decide(
            &SystemState::zero(5),
            0.0,
            &params(),
            &pair().mppt,
            &SafetyLimits::default(),
            20.0,
            &WindowConfig::default(),
            0.01,
        )
        .unwrap();
        assert_eq!(d.mode, Mode::Mppt);
        assert_eq!(d.trigger, Trigger::PredictedSafe);
        assert_eq!(d.predicted_nadir, Some(0.0));
        assert_eq!(d.first_violation_time, None);
    }

    #[test]
    fn predictive_classifies_case_scenarios() {
        let p = params();
        let modes = pair();
        let lim = SafetyLimits::default();
        let wc = WindowConfig::default();
        let safe = predictive_decide(
            &SystemState::zero(5),
            500.0 / 6000.0,
            &p,
            &modes.mppt,
            &lim,
            20.0,
            &wc,
            0.01,
        )
        .unwrap();
        assert_eq!(safe.mode, Mode::Mppt);
        // The predicted drop exceeds a 0.2 Hz deadband yet the rule holds.
        assert!(drop_magnitude(safe.predicted_nadir.unwrap()) > 0.2);

        let unsafe_d = predictive_decide(
            &SystemState::zero(5),
            1000.0 / 6000.0,
            &p,
            &modes.mppt,
            &lim,
            20.0,
            &wc,
            0.01,
        )
        .unwrap();
        assert_eq!(unsafe_d.mode, Mode::Support);
        assert!(unsafe_d.first_violation_time.is_some());
        assert!(drop_magnitude(unsafe_d.predicted_nadir.unwrap()) > 0.5);
    }

    #[test]
    fn predictive_verdict_is_scale_invariant() {
        let p = params();
        let modes = pair();
        let wc = WindowConfig::default();
        for alpha in [0.5, 2.0, 10.0] {
            for dpd in [500.0 / 6000.0, 1000.0 / 6000.0] {
                let base = predictive_decide(
                    &SystemState::zero(5),
                    dpd,
                    &p,
                    &modes.mppt,
                    &SafetyLimits { dw_lim: 0.5 },
                    20.0,
                    &wc,
                    0.01,
                )
                .unwrap();
                let scaled = predictive_decide(
                    &SystemState::zero(5),
                    alpha * dpd,
                    &p,
                    &modes.mppt,
                    &SafetyLimits {
                        dw_lim: alpha * 0.5,
                    },
                    20.0,
                    &wc,
                    0.01,
                )
                .unwrap();
                assert_eq!(base.mode, scaled.mode, "alpha={alpha} dpd={dpd}");
            }
        }
    }
}
