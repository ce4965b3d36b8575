//! Semi-analytical grid frequency prediction and adaptive wind turbine
//! mode switching.
//!
//! The library models the aggregate post-disturbance frequency response of
//! a grid with N wind turbine generators, solves it as chained power series
//! via a differential-transformation recursion, cross-checks that predictor
//! against a fixed-step Runge-Kutta oracle, and uses the prediction to
//! decide whether the turbines must leave normal (MPPT) operation for a
//! frequency-support mode. Deadband-based switching rules are included for
//! comparison, along with a simulation-based computation of the critical
//! deadband width.

pub mod dt_engine;
pub mod integrator;
pub mod model;
pub mod scenario;
pub mod strategies;
pub mod trajectory;

pub use dt_engine::{SeriesCoeffs, WindowConfig};
pub use integrator::{IntegratorConfig, ModePair};
pub use model::{Disturbance, SystemParams, SystemState, TurbineCoeffs, WtgModeCoeffs};
pub use scenario::{RunReport, ScenarioConfig};
pub use strategies::{CriticalWidth, Decision, SafetyLimits, StrategyKind};
pub use trajectory::{Mode, SwitchEvent, Trajectory};
