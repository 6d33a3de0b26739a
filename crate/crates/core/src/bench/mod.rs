//! Experiment harness: configs, attack/defense pipelines, reports and the
//! estimation scaling benchmark.

mod config;
mod pipeline;
mod report;
mod scaling;

pub use config::{DatasetSpec, Defense, RunConfig, Similarity};
pub use pipeline::{
    build_graph, derive_seed, prepare_graph, run_ablation, run_experiment, run_intensity_sweep,
    train_defended,
};
pub use report::{mean_std, ExperimentReport, ReportRow, SeedCell, SeedFailure};
pub use scaling::{
    estimation_pass, linear_fit, random_graph, scaling_bench, ScalingPoint, ScalingReport,
};
