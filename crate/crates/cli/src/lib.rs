//! Experiment harness and file formats for the jsct toolkit.
//!
//! This crate owns everything with an IO surface: the TOML experiment
//! configuration, the binary matrix/sinogram/image formats, convergence CSVs,
//! the reference-optimum procedure, and the experiment driver behind the
//! `jsct` binary. The numerics live in `jsct-core`.

pub mod config;
pub mod harness;
pub mod io;

pub use config::Config;
pub use harness::{compute_reference_optimum, run_experiment, ExperimentSummary};
