//! Experiment orchestration: confidence intervals, replicated runs,
//! convergence-rate fits and result files.

pub mod ci;
pub mod experiment;
pub mod grid;
pub mod output;
pub mod rate;

pub use ci::{confidence_interval, coverage, Coverage, IntervalSet};
pub use experiment::{
    run_experiment, run_rng, BmWindow, CheckpointRecord, EstimateRecord, EstimatorKind,
    ExperimentConfig, ExperimentResult, RunRecord,
};
pub use output::{emit_outputs, read_matrix, write_matrix, Summary};
pub use rate::{fit_log_slope, MeanRateStudy, RatePoint};
