//! Experiment campaign driver over `aggsim-core`: configuration files,
//! Monte-Carlo orchestration, CSV emission and trace-file verification.

pub mod campaign;
pub mod config;
pub mod metrics;
pub mod tracefile;
pub mod verify;
