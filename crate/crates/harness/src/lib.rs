//! Experiment runner for `stackdyn`: JSON configs in, CSV and JSON artifacts out.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod field;
pub mod tasks;

pub use config::{parse_config, parse_run_config, read_value, ExperimentConfig, Task};
pub use error::{ErrorReport, HarnessError, HarnessResult};
pub use field::{emit_vector_field, VectorFieldGrid};
pub use tasks::{execute, simulate, sweep, task_field, Outcome, RunMetrics};
