//! Config-driven experiment runner on top of the `degheat` library.
//!
//! Every subcommand reads an [`ExperimentConfig`], writes CSV/JSON files into
//! the output directory and always finishes with `summary.json`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod summary;

pub use commands::{execute, Command};
pub use config::{ControlProfile, ExperimentConfig, Profile};
pub use summary::{Check, Summary};
