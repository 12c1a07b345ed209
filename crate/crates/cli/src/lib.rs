//! Batch front-end for the `overdamp` solvers: configuration parsing, run
//! dispatch and artifact output.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{audit_snapshot, execute, load_config, Failure, Outcome};
pub use config::{parse_config, ConfigError, ConfigIssue, Mode, RunConfig};
