//! Config ingestion, scenario execution and deterministic artifact emission.
//!
//! A scenario bundles the physical parameters, the disturbance, the safety
//! limit and a set of switching strategies. Running it produces one
//! trajectory CSV per strategy, a decision JSON and a plain-text comparison
//! table, all with fixed column order and 12-significant-digit numerics so
//! identical configs yield identical files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dt_engine::{self, DtError, WindowConfig};
use crate::integrator::{self, IntegratorConfig, ModePair, SimError};
use crate::model::{self, Disturbance, SystemParams, SystemState, TurbineCoeffs, WtgModeCoeffs};
use crate::strategies::{self, Decision, SafetyLimits, StrategyError, StrategyKind};
use crate::trajectory::{SwitchEvent, Trajectory};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("strategy '{strategy}': {source}")]
    Strategy {
        strategy: String,
        source: StrategyError,
    },
    #[error("strategy '{strategy}': {source}")]
    Sim { strategy: String, source: SimError },
    #[error(transparent)]
    Dt(#[from] DtError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Full scenario description as read from a JSON config file. Every field
/// has a documented default; an empty object `{}` is the bundled
/// case-study calibration with a -500 MW disturbance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemParams,
    /// Support-mode coefficient sextuples, one per turbine.
    pub turbines: Vec<TurbineCoeffs>,
    /// Optional MPPT-mode override; derived from `turbines` by zeroing the
    /// support gains when absent.
    pub turbines_mppt: Option<Vec<TurbineCoeffs>>,
    pub disturbance: Disturbance,
    pub limits: SafetyLimits,
    /// Fixed-deadband width, Hz.
    pub deadband_hz: f64,
    /// Strategy names to run: "deadband", "critical_deadband", "predictive".
    pub strategies: Vec<String>,
    /// Prediction horizon of the predictive strategy, seconds.
    pub horizon_s: f64,
    pub window: WindowConfig,
    pub integrator: IntegratorConfig,
    /// Delay between an unsafe prediction and support activation, seconds.
    pub decision_delay_s: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            system: SystemParams::default(),
            turbines: vec![TurbineCoeffs::support_default(); 5],
            turbines_mppt: None,
            disturbance: Disturbance::default(),
            limits: SafetyLimits::default(),
            deadband_hz: 0.2,
            strategies: vec!["deadband".into(), "predictive".into()],
            horizon_s: 20.0,
            window: WindowConfig::default(),
            integrator: IntegratorConfig::default(),
            decision_delay_s: 0.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: String| ConfigError::Validation(e);
        self.system.validate().map_err(|e| inv(e.to_string()))?;
        let support = self.support_mode();
        support.validate().map_err(|e| inv(e.to_string()))?;
        let mppt = self.mppt_mode();
        mppt.validate().map_err(|e| inv(e.to_string()))?;
        if !mppt.is_mppt() {
            return Err(inv(
                "turbines_mppt must have zero b1, b2, d1, d2 gains".into()
            ));
        }
        if mppt.len() != support.len() {
            return Err(inv(format!(
                "turbines_mppt has {} turbines, turbines has {}",
                mppt.len(),
                support.len()
            )));
        }
        model::closure_factor(&self.system, &support).map_err(|e| inv(e.to_string()))?;
        self.limits.validate().map_err(inv)?;
        // +inf is a valid width: it means "never switch".
        if self.deadband_hz.is_nan() || self.deadband_hz < 0.0 {
            return Err(inv(format!(
                "deadband_hz must be >= 0, got {}",
                self.deadband_hz
            )));
        }
        if !self.horizon_s.is_finite() || self.horizon_s <= 0.0 {
            return Err(inv(format!(
                "horizon_s must be > 0, got {}",
                self.horizon_s
            )));
        }
        if self.decision_delay_s.is_nan() || self.decision_delay_s < 0.0 {
            return Err(inv(format!(
                "decision_delay_s must be >= 0, got {}",
                self.decision_delay_s
            )));
        }
        self.window.validate().map_err(|e| inv(e.to_string()))?;
        self.integrator.validate().map_err(|e| inv(e.to_string()))?;
        for name in &self.strategies {
            self.strategy_by_name(name)?;
        }
        if self.strategies.is_empty() {
            return Err(inv("at least one strategy must be selected".into()));
        }
        Ok(())
    }

    pub fn support_mode(&self) -> WtgModeCoeffs {
        WtgModeCoeffs::new(self.turbines.clone())
    }

    pub fn mppt_mode(&self) -> WtgModeCoeffs {
        match &self.turbines_mppt {
            Some(t) => WtgModeCoeffs::new(t.clone()),
            None => self.support_mode().to_mppt(),
        }
    }

    pub fn mode_pair(&self) -> ModePair {
        ModePair {
            mppt: self.mppt_mode(),
            support: self.support_mode(),
        }
    }

    pub fn dpd(&self) -> f64 {
        self.disturbance.dp_pu(self.system.base_mva)
    }

    pub fn strategy_by_name(&self, name: &str) -> Result<StrategyKind, ConfigError> {
        match name {
            "deadband" => Ok(StrategyKind::FixedDeadband {
                width: self.deadband_hz,
            }),
            "critical_deadband" | "critical" => Ok(StrategyKind::CriticalDeadband),
            "predictive" => Ok(StrategyKind::Predictive {
                horizon: self.horizon_s,
                window: self.window,
                decision_delay: self.decision_delay_s,
            }),
            other => Err(ConfigError::Validation(format!(
                "unknown strategy '{other}' (expected deadband, critical_deadband or predictive)"
            ))),
        }
    }
}

/// Parse and validate a scenario config file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg: ScenarioConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Outcome of one strategy run within a scenario.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub strategy: String,
    pub decision: Decision,
    pub events: Vec<SwitchEvent>,
    /// Nadir of the closed-loop run, absolute seconds and Hz.
    pub nadir_time_s: f64,
    pub nadir_dw_hz: f64,
    /// Analytic MPPT quasi-steady-state deviation, Hz.
    pub steady_state_dw_hz: f64,
    /// Max |dw| discrepancy of the series predictor against the oracle on
    /// the open-loop MPPT run of this scenario.
    pub predictor_vs_oracle_max_err_hz: f64,
    pub wall_clock_us: u64,
}

/// One line of the emitted decision JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub strategy: String,
    /// "mppt" or "support".
    pub decision: String,
    pub predicted_nadir_hz: Option<f64>,
    pub first_violation_time_s: Option<f64>,
    pub switch_time_s: Option<f64>,
    pub wall_clock_us: u64,
}

impl DecisionRecord {
    fn from_report(r: &RunReport, t0: f64) -> Self {
        Self {
            strategy: r.strategy.clone(),
            decision: r
                .events
                .last()
                .map_or(r.decision.mode, |e| e.to)
                .to_string(),
            predicted_nadir_hz: r.decision.predicted_nadir,
            first_violation_time_s: r.decision.first_violation_time.map(|t| t + t0),
            switch_time_s: r.events.first().map(|e| e.time + t0),
            wall_clock_us: r.wall_clock_us,
        }
    }
}

fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Run every selected strategy of the scenario, producing reports and the
/// per-strategy closed-loop trajectories.
pub fn execute(cfg: &ScenarioConfig) -> Result<Vec<(RunReport, Trajectory)>, ScenarioError> {
    cfg.validate()?;
    let modes = cfg.mode_pair();
    let dpd = cfg.dpd();
    let x0 = SystemState::zero(modes.mppt.len());

    // Predictor accuracy against the oracle, measured once on the open-loop
    // MPPT response.
    let open = integrator::integrate_fixed(&x0, &cfg.system, &modes.mppt, dpd, &cfg.integrator)
        .map_err(|source| ScenarioError::Sim {
            strategy: "open_loop_mppt".into(),
            source,
        })?;
    let predicted = dt_engine::predict_trajectory(
        &x0,
        &cfg.system,
        &modes.mppt,
        dpd,
        cfg.integrator.horizon,
        &cfg.window,
        cfg.integrator.sample_dt,
    )?;
    let predictor_err = predicted.max_dw_diff(&open);
    let steady_state = model::steady_state_deviation(&cfg.system, dpd);

    let mut results = Vec::new();
    for name in &cfg.strategies {
        let strategy = cfg.strategy_by_name(name)?;
        let started = Instant::now();
        let traj = integrator::simulate_closed_loop(
            &x0,
            &cfg.system,
            &modes,
            dpd,
            &strategy,
            &cfg.limits,
            &cfg.integrator,
        )
        .map_err(|source| ScenarioError::Sim {
            strategy: name.clone(),
            source,
        })?;
        let wall_clock_us = started.elapsed().as_micros() as u64;

        let decision = match &strategy {
            StrategyKind::Predictive {
                horizon, window, ..
            } => strategies::predictive_decide(
                &x0,
                dpd,
                &cfg.system,
                &modes.mppt,
                &cfg.limits,
                *horizon,
                window,
                cfg.integrator.sample_dt,
            )
            .map_err(|source| ScenarioError::Strategy {
                strategy: name.clone(),
                source,
            })?,
            StrategyKind::FixedDeadband { width } => strategies::deadband_decide(x0.dw, *width),
            StrategyKind::CriticalDeadband => {
                let crit = strategies::compute_critical_deadband(
                    dpd,
                    &cfg.system,
                    &modes,
                    &cfg.limits,
                    &cfg.integrator,
                )
                .map_err(|source| ScenarioError::Strategy {
                    strategy: name.clone(),
                    source,
                })?;
                strategies::critical_decide(x0.dw, &crit)
            }
        };

        let (nadir_t, nadir_dw) = traj.nadir().unwrap_or((0.0, 0.0));
        let report = RunReport {
            strategy: name.clone(),
            decision,
            events: traj.events.clone(),
            nadir_time_s: nadir_t + cfg.disturbance.t0,
            nadir_dw_hz: nadir_dw,
            steady_state_dw_hz: steady_state,
            predictor_vs_oracle_max_err_hz: predictor_err,
            wall_clock_us,
        };
        results.push((report, traj));
    }
    Ok(results)
}

/// Execute the scenario and write the trajectory CSVs, the decision JSON
/// and the comparison report into `out_dir`.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<Vec<RunReport>, ScenarioError> {
    let results = execute(cfg)?;
    fs::create_dir_all(out_dir).map_err(|source| ScenarioError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let write = |path: &Path, contents: &str| -> Result<(), ScenarioError> {
        fs::write(path, contents).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })
    };

    for (report, traj) in &results {
        let path = out_dir.join(format!("trajectory_{}.csv", report.strategy));
        write(&path, &trajectory_csv(traj, cfg.disturbance.t0))?;
    }

    let records: Vec<DecisionRecord> = results
        .iter()
        .map(|(r, _)| DecisionRecord::from_report(r, cfg.disturbance.t0))
        .collect();
    let mut json = serde_json::to_string_pretty(&records).expect("serializable records");
    json.push('\n');
    write(&out_dir.join("decisions.json"), &json)?;

    let reports: Vec<RunReport> = results.into_iter().map(|(r, _)| r).collect();
    write(
        &out_dir.join("report.txt"),
        &compare_report(&reports, &cfg.limits),
    )?;
    Ok(reports)
}

/// Serialize a trajectory with the fixed column order
/// `t,dw_hz,dpm_pu,dpv_pu,dwr_1..dwr_N,dpgen_total_pu,mode`.
pub fn trajectory_csv(traj: &Trajectory, t0: f64) -> String {
    let n = traj.states.first().map_or(0, |s| s.dwr.len());
    let mut out = String::new();
    out.push_str("t,dw_hz,dpm_pu,dpv_pu");
    for i in 1..=n {
        out.push_str(&format!(",dwr_{i}"));
    }
    out.push_str(",dpgen_total_pu,mode\n");
    for idx in 0..traj.len() {
        let s = &traj.states[idx];
        out.push_str(&sig12(traj.times[idx] + t0));
        for v in [s.dw, s.dpm, s.dpv] {
            out.push(',');
            out.push_str(&sig12(v));
        }
        for &v in &s.dwr {
            out.push(',');
            out.push_str(&sig12(v));
        }
        out.push(',');
        out.push_str(&sig12(traj.pgen_total[idx]));
        out.push(',');
        out.push_str(&traj.modes[idx].to_string());
        out.push('\n');
    }
    out
}

/// Tabulate switch behaviour and safety per strategy, one row each, in
/// input order.
pub fn compare_report(reports: &[RunReport], limits: &SafetyLimits) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<20} {:>9} {:>14} {:>16} {:>6}\n",
        "strategy", "switched", "switch_time_s", "nadir_drop_hz", "safe"
    ));
    for r in reports {
        let switched = !r.events.is_empty();
        let switch_time = r
            .events
            .first()
            .map_or("-".to_string(), |e| format!("{:.6}", e.time));
        let drop = (-r.nadir_dw_hz).max(0.0);
        out.push_str(&format!(
            "{:<20} {:>9} {:>14} {:>16} {:>6}\n",
            r.strategy,
            if switched { "yes" } else { "no" },
            switch_time,
            sig12(drop),
            if drop <= limits.dw_lim { "yes" } else { "no" },
        ));
    }
    out
}
