//! Batch front end for `fastreact-core`: TOML configuration, initial-data
//! expressions, CSV output and the `simulate`, `sweep`, `limit` and `check`
//! commands.

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod expr;
pub mod output;

pub use config::{RunConfig, Setup};
pub use error::CliError;
