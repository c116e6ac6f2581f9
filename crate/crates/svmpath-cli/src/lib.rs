//! Command-line driver for the path tracer: configuration, synthetic data
//! generation, run orchestration, and CSV report writers. The binary in
//! `main.rs` is a thin argument-parsing shell over [`run`].

pub mod config;
pub mod output;
pub mod runner;
pub mod synthetic;

pub use config::{DataSource, KernelChoice, Mode, RunConfig};
pub use runner::{exit_code_for, run, RunArtifacts};
pub use synthetic::generate_synthetic;
