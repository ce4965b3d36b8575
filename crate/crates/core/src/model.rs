//! Aggregate system frequency response model augmented with reduced-order
//! wind turbine generator (WTG) dynamics.
//!
//! The state is the deviation vector `[dw, dpm, dpv, dwr_1 .. dwr_N]`:
//! frequency deviation (Hz), turbine mechanical power and governor valve
//! power deviations (per-unit), and per-turbine rotor speed deviations.
//! WTG power output feeds the frequency derivative back through the `d1`
//! gains, which creates an algebraic loop; it is eliminated in closed form
//! by the factor returned from [`closure_factor`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(
        "infeasible algebraic-loop closure: 1 - (omega_s/2H)*sum(d1) = {denom} with sum(d1) = {sum_d1}"
    )]
    InfeasibleClosure { denom: f64, sum_d1: f64 },
}

/// How the governor droop term scales the frequency deviation.
///
/// `Normalized` divides by `R * omega_s` (deviation in Hz converted to
/// per-unit before the droop gain); `LiteralPaper` divides by `R` alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DroopConvention {
    #[default]
    Normalized,
    LiteralPaper,
}

/// Aggregate system constants of the frequency response model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemParams {
    /// Equivalent inertia constant, seconds.
    pub h: f64,
    /// Load damping coefficient, pu power per pu frequency.
    pub d: f64,
    /// Governor droop, per-unit.
    pub r: f64,
    /// Turbine (reheat/charging) time constant, seconds.
    pub tau_ch: f64,
    /// Governor time constant, seconds.
    pub tau_g: f64,
    /// Nominal frequency, Hz.
    pub omega_s: f64,
    /// System power base, MVA.
    pub base_mva: f64,
    pub droop_convention: DroopConvention,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            h: 4.0,
            d: 1.0,
            r: 0.05,
            tau_ch: 0.3,
            tau_g: 0.1,
            omega_s: 60.0,
            base_mva: 6000.0,
            droop_convention: DroopConvention::Normalized,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            (self.h, "h"),
            (self.tau_ch, "tau_ch"),
            (self.tau_g, "tau_g"),
            (self.r, "r"),
            (self.omega_s, "omega_s"),
            (self.base_mva, "base_mva"),
        ];
        for (v, name) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(ModelError::InvalidParam(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if !self.d.is_finite() || self.d < 0.0 {
            return Err(ModelError::InvalidParam(format!(
                "d must be >= 0, got {}",
                self.d
            )));
        }
        Ok(())
    }

    /// `omega_s / (2H)`, the swing-equation input gain.
    pub fn swing_gain(&self) -> f64 {
        self.omega_s / (2.0 * self.h)
    }

    /// Droop gain applied to the frequency deviation in the governor equation.
    pub fn droop_gain(&self) -> f64 {
        match self.droop_convention {
            DroopConvention::Normalized => 1.0 / (self.r * self.omega_s),
            DroopConvention::LiteralPaper => 1.0 / self.r,
        }
    }
}

/// Reduced-order WTG coefficient sextuple for one turbine in one mode.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct TurbineCoeffs {
    /// Rotor-state self-dynamics coefficient, 1/s. Must be negative.
    pub a: f64,
    /// Frequency-derivative input gain (inertia emulation).
    pub b1: f64,
    /// Frequency input gain (primary frequency control).
    pub b2: f64,
    /// Rotor-to-power output gain.
    pub c: f64,
    /// Frequency-derivative feed-through gain.
    pub d1: f64,
    /// Frequency feed-through gain.
    pub d2: f64,
}

impl TurbineCoeffs {
    /// Case-study support-mode coefficients.
    pub fn support_default() -> Self {
        Self {
            a: -0.0723,
            b1: -0.6246,
            b2: 0.1874,
            c: 0.0127,
            d1: -0.10,
            d2: -0.03,
        }
    }

    /// Same rotor dynamics with all frequency-support gains zeroed.
    pub fn to_mppt(self) -> Self {
        Self {
            b1: 0.0,
            b2: 0.0,
            d1: 0.0,
            d2: 0.0,
            ..self
        }
    }
}

/// Per-mode coefficient set for N turbines.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WtgModeCoeffs {
    pub turbines: Vec<TurbineCoeffs>,
}

impl WtgModeCoeffs {
    pub fn new(turbines: Vec<TurbineCoeffs>) -> Self {
        Self { turbines }
    }

    /// MPPT counterpart of this mode: support gains zeroed on every turbine.
    pub fn to_mppt(&self) -> Self {
        Self {
            turbines: self.turbines.iter().map(|t| t.to_mppt()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.turbines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turbines.is_empty()
    }

    pub fn sum_d1(&self) -> f64 {
        self.turbines.iter().map(|t| t.d1).sum()
    }

    /// True when every support gain is zero (normal operation).
    pub fn is_mppt(&self) -> bool {
        self.turbines
            .iter()
            .all(|t| t.b1 == 0.0 && t.b2 == 0.0 && t.d1 == 0.0 && t.d2 == 0.0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, t) in self.turbines.iter().enumerate() {
            if !t.a.is_finite() || t.a >= 0.0 {
                return Err(ModelError::InvalidParam(format!(
                    "turbine {i}: a must be < 0, got {}",
                    t.a
                )));
            }
            for (v, name) in [
                (t.b1, "b1"),
                (t.b2, "b2"),
                (t.c, "c"),
                (t.d1, "d1"),
                (t.d2, "d2"),
            ] {
                if !v.is_finite() {
                    return Err(ModelError::InvalidParam(format!(
                        "turbine {i}: {name} must be finite"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Deviation state vector; dimension is `3 + N` for N turbines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Frequency deviation, Hz.
    pub dw: f64,
    /// Turbine mechanical power deviation, pu.
    pub dpm: f64,
    /// Governor valve power deviation, pu.
    pub dpv: f64,
    /// Rotor speed deviations, pu, one per turbine.
    pub dwr: Vec<f64>,
}

impl SystemState {
    pub fn zero(n_turbines: usize) -> Self {
        Self {
            dw: 0.0,
            dpm: 0.0,
            dpv: 0.0,
            dwr: vec![0.0; n_turbines],
        }
    }

    pub fn dim(&self) -> usize {
        3 + self.dwr.len()
    }

    /// Components in the fixed order `[dw, dpm, dpv, dwr_1..dwr_N]`.
    pub fn components(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.dw);
        v.push(self.dpm);
        v.push(self.dpv);
        v.extend_from_slice(&self.dwr);
        v
    }

    /// `self + c * other`, componentwise.
    pub fn scaled_add(&self, other: &Self, c: f64) -> Self {
        Self {
            dw: self.dw + c * other.dw,
            dpm: self.dpm + c * other.dpm,
            dpv: self.dpv + c * other.dpv,
            dwr: self
                .dwr
                .iter()
                .zip(&other.dwr)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dw: c * self.dw,
            dpm: c * self.dpm,
            dpv: c * self.dpv,
            dwr: self.dwr.iter().map(|v| c * v).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dw.is_finite()
            && self.dpm.is_finite()
            && self.dpv.is_finite()
            && self.dwr.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.components().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Signed power imbalance and its detection time.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct Disturbance {
    /// Signed imbalance in MW; negative means loss of generation.
    pub dp_mw: f64,
    /// Detection time, seconds.
    pub t0: f64,
}

impl Default for Disturbance {
    fn default() -> Self {
        Self {
            dp_mw: -500.0,
            t0: 0.0,
        }
    }
}

impl Disturbance {
    /// Per-unit imbalance with the sign convention that a positive value
    /// drives the frequency down (loss of generation).
    pub fn dp_pu(&self, base_mva: f64) -> f64 {
        -self.dp_mw / base_mva
    }
}

/// Factor resolving the mutual dependence of the frequency derivative and
/// the WTG feed-through power: `1 / (1 - (omega_s/2H) * sum(d1))`.
pub fn closure_factor(params: &SystemParams, mode: &WtgModeCoeffs) -> Result<f64, ModelError> {
    let sum_d1 = mode.sum_d1();
    let denom = 1.0 - params.swing_gain() * sum_d1;
    if denom <= 0.0 {
        return Err(ModelError::InfeasibleClosure { denom, sum_d1 });
    }
    Ok(1.0 / denom)
}

/// Time derivative of the full deviation state.
pub fn rhs(
    state: &SystemState,
    params: &SystemParams,
    mode: &WtgModeCoeffs,
    dpd: f64,
) -> Result<SystemState, ModelError> {
    let gamma = closure_factor(params, mode)?;
    let swing = params.swing_gain();

    // WTG power without the dw_dot feed-through; the loop is closed by gamma.
    let mut pgen_static = 0.0;
    for (t, wr) in mode.turbines.iter().zip(&state.dwr) {
        pgen_static += t.c * wr + t.d2 * state.dw;
    }
    let dw_dot =
        gamma * swing * (state.dpm - dpd + pgen_static - params.d / params.omega_s * state.dw);

    let dpm_dot = (state.dpv - state.dpm) / params.tau_ch;
    let dpv_dot = (-state.dpv - params.droop_gain() * state.dw) / params.tau_g;

    let dwr_dot = mode
        .turbines
        .iter()
        .zip(&state.dwr)
        .map(|(t, wr)| t.a * wr + t.b2 * state.dw + t.b1 * dw_dot)
        .collect();

    Ok(SystemState {
        dw: dw_dot,
        dpm: dpm_dot,
        dpv: dpv_dot,
        dwr: dwr_dot,
    })
}

/// Total WTG power output given the already-closed frequency derivative.
pub fn wtg_power_output(state: &SystemState, dw_dot: f64, mode: &WtgModeCoeffs) -> f64 {
    mode.turbines
        .iter()
        .zip(&state.dwr)
        .map(|(t, wr)| t.c * wr + t.d1 * dw_dot + t.d2 * state.dw)
        .sum()
}

/// Analytic quasi-steady-state frequency deviation in MPPT mode, Hz.
///
/// Used as an equilibrium oracle: at steady state the rotor deviations
/// vanish (a < 0) and the governor/turbine chain balances the imbalance.
pub fn steady_state_deviation(params: &SystemParams, dpd: f64) -> f64 {
    -dpd / (params.droop_gain() + params.d / params.omega_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case_params() -> SystemParams {
        SystemParams::default()
    }

    fn support_mode(n: usize) -> WtgModeCoeffs {
        WtgModeCoeffs::new(vec![TurbineCoeffs::support_default(); n])
    }

    fn mppt_mode(n: usize) -> WtgModeCoeffs {
        support_mode(n).to_mppt()
    }

    #[test]
    fn closure_factor_is_one_in_mppt() {
        let g = closure_factor(&case_params(), &mppt_mode(5)).unwrap();
        assert_eq!(g, 1.0);
    }

    #[test]
    fn closure_factor_support_mode() {
        let g = closure_factor(&case_params(), &support_mode(5)).unwrap();
        // 1 / (1 - 7.5 * (-0.5)) = 1/4.75
        assert!((g - 1.0 / 4.75).abs() < 1e-15);
    }

    #[test]
    fn closure_factor_boundary_errors() {
        let params = case_params();
        let mut t = TurbineCoeffs::support_default();
        t.d1 = 2.0 * params.h / params.omega_s;
        let mode = WtgModeCoeffs::new(vec![t]);
        assert!(matches!(
            closure_factor(&params, &mode),
            Err(ModelError::InfeasibleClosure { .. })
        ));
    }

    #[test]
    fn rhs_equilibrium_is_zero() {
        let d = rhs(&SystemState::zero(5), &case_params(), &support_mode(5), 0.0).unwrap();
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn rhs_step_response_mppt() {
        let d = rhs(&SystemState::zero(5), &case_params(), &mppt_mode(5), 0.1).unwrap();
        assert!((d.dw - (-0.75)).abs() < 1e-15);
        assert_eq!(d.dpm, 0.0);
        assert_eq!(d.dpv, 0.0);
        assert!(d.dwr.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rhs_step_response_support() {
        let d = rhs(&SystemState::zero(5), &case_params(), &support_mode(5), 0.1).unwrap();
        assert!((d.dw - (-0.75 / 4.75)).abs() < 1e-12);
    }

    #[test]
    fn wtg_power_zero_gains_in_mppt() {
        let mut x = SystemState::zero(5);
        x.dwr[0] = 1.0;
        let p = wtg_power_output(&x, -3.0, &mppt_mode(5));
        assert!((p - 0.0127).abs() < 1e-15);
    }

    #[test]
    fn wtg_power_feed_through() {
        let x = SystemState::zero(5);
        let dw_dot = -0.75 / 4.75;
        let p = wtg_power_output(&x, dw_dot, &support_mode(5));
        assert!((p - 5.0 * (-0.10) * dw_dot).abs() < 1e-12);
        assert!((p - 0.0789474).abs() < 1e-6);
    }

    #[test]
    fn wtg_power_additive_over_turbines() {
        let mode = support_mode(3);
        let mut x = SystemState::zero(3);
        x.dw = -0.2;
        x.dwr = vec![0.1, -0.3, 0.05];
        let total = wtg_power_output(&x, -0.4, &mode);
        let mut sum = 0.0;
        for i in 0..3 {
            let single = WtgModeCoeffs::new(vec![mode.turbines[i]]);
            let xi = SystemState {
                dw: x.dw,
                dpm: 0.0,
                dpv: 0.0,
                dwr: vec![x.dwr[i]],
            };
            sum += wtg_power_output(&xi, -0.4, &single);
        }
        assert!((total - sum).abs() < 1e-15);
    }

    #[test]
    fn steady_state_values() {
        let p = case_params();
        assert_eq!(steady_state_deviation(&p, 0.0), 0.0);
        let ss = steady_state_deviation(&p, 0.1);
        assert!((ss - (-0.1 / (1.0 / 3.0 + 1.0 / 60.0))).abs() < 1e-12);
        assert!((ss - (-0.2857143)).abs() < 1e-6);

        let lit = SystemParams {
            droop_convention: DroopConvention::LiteralPaper,
            ..p
        };
        let ss = steady_state_deviation(&lit, 0.1);
        assert!((ss - (-0.0049958)).abs() < 1e-6);
    }

    #[test]
    fn rhs_vanishes_at_mppt_equilibrium() {
        let p = case_params();
        let mode = mppt_mode(5);
        let dpd = 0.1;
        let dw = steady_state_deviation(&p, dpd);
        let pv = -p.droop_gain() * dw;
        let x = SystemState {
            dw,
            dpm: pv,
            dpv: pv,
            dwr: vec![0.0; 5],
        };
        let d = rhs(&x, &p, &mode, dpd).unwrap();
        assert!(d.max_abs() <= 1e-12, "residual {}", d.max_abs());
    }

    #[test]
    fn rhs_is_linear() {
        let p = case_params();
        for mode in [mppt_mode(5), support_mode(5)] {
            let x = SystemState {
                dw: -0.3,
                dpm: 0.02,
                dpv: 0.04,
                dwr: vec![0.01, -0.02, 0.0, 0.005, 0.03],
            };
            let dpd = 0.08;
            let alpha = 3.7;
            let d1 = rhs(&x.scale(alpha), &p, &mode, alpha * dpd).unwrap();
            let d2 = rhs(&x, &p, &mode, dpd).unwrap().scale(alpha);
            let err = d1.scaled_add(&d2, -1.0).max_abs();
            assert!(err <= 1e-12 * d2.max_abs().max(1.0));
        }
    }

    #[test]
    fn disturbance_sign_convention() {
        let d = Disturbance {
            dp_mw: -500.0,
            t0: 0.0,
        };
        assert!((d.dp_pu(6000.0) - 500.0 / 6000.0).abs() < 1e-15);
        let gain = Disturbance {
            dp_mw: 300.0,
            t0: 0.0,
        };
        assert!((gain.dp_pu(6000.0) + 0.05).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        let mut p = case_params();
        p.tau_g = 0.0;
        assert!(p.validate().is_err());
        let mut p = case_params();
        p.d = -0.1;
        assert!(p.validate().is_err());
        assert!(case_params().validate().is_ok());
    }
}
