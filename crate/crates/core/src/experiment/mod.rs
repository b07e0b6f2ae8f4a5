//! Benchmark sweeps, hyperparameter search and reports.

mod bench;
mod config;
mod report;
mod tune;

pub use bench::{cmd_bench, cmd_generate, cmd_report, replicate_dgp, run_estimator, run_seed, write_report};
pub use config::{BaselineSettings, EstimatorKind, ExperimentConfig, TuneSettings};
pub use report::{aggregate, mean_std, Aggregate, BenchmarkReport, RunRecord};
pub use tune::{cmd_tune, sample_candidates, train_validation_split, Candidate, TuneResult};
