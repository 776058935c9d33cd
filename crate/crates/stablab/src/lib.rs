//! Experiment runner for the stability lab: JSON configs, deterministic
//! parallel replicates, CSV/JSON outputs, and the `stablab` command line.

pub mod cli;
pub mod commands;
pub mod config;
pub mod io;
pub mod parallel;
