use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use gridfreq::model::SystemState;
use gridfreq::scenario::{self, DecisionRecord, ScenarioError};
use gridfreq::strategies::{self, CriticalWidth, StrategyError};
use gridfreq::trajectory::Mode;

/// Predict post-disturbance grid frequency and decide wind turbine mode
/// switching.
#[derive(Parser)]
#[command(name = "gridfreq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured strategies and write trajectory CSVs, a decision
    /// JSON and a comparison report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the predictive strategy's decision as JSON on stdout.
    Predict {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compute and print the critical deadband width for the configured
    /// disturbance.
    CriticalDb {
        #[arg(long)]
        config: PathBuf,
    },
}

// Exit codes: 0 success, 1 config error, 2 numerical failure,
// 3 unsafe even with immediate support.
fn exit_code(err: &ScenarioError) -> u8 {
    match err {
        ScenarioError::Config(_) => 1,
        ScenarioError::Strategy {
            source: StrategyError::UnsafeEvenWithSupport { .. },
            ..
        } => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), ScenarioError> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = scenario::load_config(&config)?;
            let reports = scenario::run_scenario(&cfg, &out)?;
            for r in &reports {
                let switched = r.events.first().map_or("no switch".to_string(), |e| {
                    format!("switched at t = {:.6} s", e.time + cfg.disturbance.t0)
                });
                println!(
                    "{:<20} {} | nadir {:.6} Hz at {:.3} s",
                    r.strategy, switched, r.nadir_dw_hz, r.nadir_time_s
                );
            }
            println!("artifacts written to {}", out.display());
            Ok(())
        }
        Command::Predict { config } => {
            let cfg = scenario::load_config(&config)?;
            let modes = cfg.mode_pair();
            let x0 = SystemState::zero(modes.mppt.len());
            let started = Instant::now();
            let decision = strategies::predictive_decide(
                &x0,
                cfg.dpd(),
                &cfg.system,
                &modes.mppt,
                &cfg.limits,
                cfg.horizon_s,
                &cfg.window,
                cfg.integrator.sample_dt,
            )
            .map_err(|source| ScenarioError::Strategy {
                strategy: "predictive".into(),
                source,
            })?;
            let wall_clock_us = started.elapsed().as_micros() as u64;
            let t0 = cfg.disturbance.t0;
            let record = DecisionRecord {
                strategy: "predictive".into(),
                decision: decision.mode.to_string(),
                predicted_nadir_hz: decision.predicted_nadir,
                first_violation_time_s: decision.first_violation_time.map(|t| t + t0),
                switch_time_s: (decision.mode == Mode::Support)
                    .then_some(t0 + cfg.decision_delay_s),
                wall_clock_us,
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&record).expect("serializable record")
            );
            Ok(())
        }
        Command::CriticalDb { config } => {
            let cfg = scenario::load_config(&config)?;
            let modes = cfg.mode_pair();
            let crit = strategies::compute_critical_deadband(
                cfg.dpd(),
                &cfg.system,
                &modes,
                &cfg.limits,
                &cfg.integrator,
            )
            .map_err(|source| ScenarioError::Strategy {
                strategy: "critical_deadband".into(),
                source,
            })?;
            match crit {
                CriticalWidth::NoSwitchNeeded => println!("no switch needed"),
                CriticalWidth::Width(w) => println!("critical deadband width: {w:.4} Hz"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
