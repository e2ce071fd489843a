//! Experiment orchestration: config parsing, replicate fan-out with
//! deterministic aggregation, CSV output, and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod experiment;
