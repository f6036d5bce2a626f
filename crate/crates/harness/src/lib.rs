//! Configuration, orchestration and acceptance checks for `lkg-core` experiments.
//!
//! A run is described by a TOML [`config::ExperimentConfig`], executed by
//! [`run::run`], and summarised in a [`report::RunReport`] whose manifest
//! hashes every file written.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod config;
pub mod report;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
pub use report::{Check, RunReport};
pub use run::{run, RunError, RunOptions};
