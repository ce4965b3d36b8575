//! Sampled trajectories with operating-mode annotations and switch events.

use serde::{Deserialize, Serialize};

use crate::model::SystemState;

/// WTG operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Mppt,
    Support,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Mppt => write!(f, "mppt"),
            Mode::Support => write!(f, "support"),
        }
    }
}

/// One mode transition in a closed-loop run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwitchEvent {
    /// Event time, seconds.
    pub time: f64,
    pub from: Mode,
    pub to: Mode,
    /// Human-readable cause, e.g. the crossed threshold.
    pub trigger: String,
}

/// Time series of states sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Sample times, seconds, strictly increasing.
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    /// Total WTG power output per sample, pu.
    pub pgen_total: Vec<f64>,
    /// Active mode per sample.
    pub modes: Vec<Mode>,
    pub events: Vec<SwitchEvent>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Minimum frequency deviation over the sample grid and its time.
    /// Returns `None` for an empty trajectory.
    pub fn nadir(&self) -> Option<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(&t, s)| (t, s.dw))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
    }

    /// Under-frequency drop magnitude at the nadir, `max(0, -dw_min)`.
    pub fn nadir_drop(&self) -> f64 {
        self.nadir().map_or(0.0, |(_, dw)| (-dw).max(0.0))
    }

    /// Max-norm difference of the frequency deviation against another
    /// trajectory sampled on the same grid.
    pub fn max_dw_diff(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .fold(0.0_f64, |m, (a, b)| m.max((a.dw - b.dw).abs()))
    }
}
