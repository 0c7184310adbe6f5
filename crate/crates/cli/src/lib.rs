//! Experiment driver behind the `avsad` binary.

pub mod experiment;
pub mod repro;
pub mod checks;
pub mod commands;
