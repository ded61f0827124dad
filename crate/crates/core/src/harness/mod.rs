//! Experiment orchestration: configs, the round loop, metrics logs and sweeps.

mod adversary;
mod config;
mod log;
mod sim;
mod sweep;

pub use adversary::Adversary;
pub use config::{AttackConfig, DatasetSpec, DefenseSpec, ExperimentConfig, ModeName, RuleSpec};
pub use log::{parse_log, read_log, render_log, summary_path, write_log, LoadedLog, SCHEMA, SCHEMA_VERSION};
pub use sim::{
    run_attacked, run_baseline, run_experiment, run_experiment_with, Environment, MetricsLog, RoundOutcome,
    RoundRecord, RunOptions, Simulation, Summary,
};
pub use sweep::{comparison_table, median, runs_table, sweep, SweepEntry, SweepResult};

use crate::error::{invalid, Result};

/// `I = max(0, a_ini - a_att)` for accuracies in `[0, 1]`.
pub fn negative_impact(a_ini: f64, a_att: f64) -> Result<f64> {
    for (name, v) in [("a_ini", a_ini), ("a_att", a_att)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(invalid(name, format!("accuracy must lie in [0, 1], got {v}")));
        }
    }
    Ok((a_ini - a_att).max(0.0))
}
