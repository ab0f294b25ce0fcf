//! Experiment configuration, replication loop, regret metrics and file outputs.

pub mod check;
pub mod config;
pub mod metrics;
pub mod output;
pub mod sim;

pub use config::{ArrivalKind, ExperimentConfig};
pub use metrics::{fit_log_curve, plateau_metric, GroupSeries, LogFit, RegretSeries};
pub use sim::{
    run_experiment, run_replication, simulate, ExperimentResult, ReplicationOutput, Summary,
};
