//! Experiment layer: configuration, plans, sweeps, rate fits, checkpoints and reports.

pub mod checkpoint;
pub mod config;
pub mod fit;
pub mod plan;
pub mod report;
pub mod run;

pub use config::Config;
pub use fit::{fit_rate, RateFit};
pub use plan::{ExperimentPlan, Scenario};
pub use run::{run, CriterionOutcome, RunRecord};
