//! Experiment harness for the bandwidth-pricing game: configuration,
//! seeded instance sampling, solve/train/sweep/compare runs and result files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod output;
pub mod record;
pub mod sampling;

pub use config::{ExperimentConfig, InstanceSpec, SweepParameter, SweepSpec};
pub use experiment::{run_compare, run_solve, run_sweep, run_training, ExperimentError, SweepOutcome};
pub use output::emit_results;
pub use record::{RunKind, RunRecord};
pub use sampling::{sample_instance, Range, SamplingRanges};
