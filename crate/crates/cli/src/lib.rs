// SPDX-License-Identifier: Apache-2.0

//! Configuration, orchestration and reporting for kfspec experiments.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod writers;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use pipeline::{execute, prepare, Command, Overrides, RunOutput};
pub use report::Report;
