//! Experiment orchestration: configuration, the run loop, metrics files,
//! checkpoints, and cross-run reports.

pub mod checkpoint;
pub mod config;
pub mod learner;
pub mod metrics;
pub mod report;
pub mod runner;

pub use checkpoint::Checkpoint;
pub use config::{Algorithm, DatasetKind, EvalCadence, ExperimentConfig, Seeds};
pub use learner::Learner;
pub use metrics::{memory_rigidity, MetricsRecord};
pub use report::write_report;
pub use runner::{default_data_root, evaluate_all_tasks, run_experiment, ExperimentRun, RunManifest};
