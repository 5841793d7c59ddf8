//! Benchmark and verification harness for the many-world graph engine.
//!
//! Each scenario builds its own graph, measures it and returns a [`Report`]
//! with metric rows and pass/fail checks. The `mwg` binary exposes them on
//! the command line.

pub mod config;
pub mod dataset;
pub mod load;
pub mod report;
pub mod stair;
pub mod temporal;
pub mod verify;
pub mod whatif;
pub mod worlds;

pub use config::Scale;
pub use report::{Check, Report, Row};
