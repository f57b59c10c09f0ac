//! Files, restarts and the command line around `paradram-core`.

pub mod cli;
pub mod config;
pub mod format;
pub mod persist;
pub mod plotdata;
pub mod report;
pub mod runner;
