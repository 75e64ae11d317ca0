//! Command-line front end for `hsflow-core`: configuration, experiment
//! orchestration and data export.

// Negated comparisons are used so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use commands::Outcome;
pub use config::{ConfigError, RunConfig};
