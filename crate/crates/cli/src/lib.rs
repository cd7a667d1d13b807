//! Config-driven harness around `fluxon-core`: parse a TOML run
//! configuration, execute an experiment or an ensemble, and persist
//! diff-able trace/report artifacts.

pub mod commands;
pub mod config;
pub mod report;
