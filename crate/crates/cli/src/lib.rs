//! Configuration, experiment driver and reports for the `pint` binary.

pub mod commands;
pub mod config;
pub mod report;
pub mod speedup;
