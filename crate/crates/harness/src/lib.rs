//! Experiment harness: HTTP backend, run configs, logs, runner and sweeps.

pub mod cli;
pub mod config;
pub mod http;
pub mod io;
pub mod runner;
pub mod suites;
