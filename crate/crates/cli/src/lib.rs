//! Experiment harness for count-based conservative offline RL: dataset
//! generation, count audits, theory checks, single runs and sweeps.
//!
//! The `countmorl` binary is a thin wrapper over [`commands`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod theory;

pub use config::ExperimentConfig;
pub use error::{Stage, StageError};
pub use pipeline::{run_experiment, run_sweep, ExperimentReport, SeedReport, SweepReport};
pub use theory::{theory_check, TheoryReport};
