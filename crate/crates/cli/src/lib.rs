//! File formats, run configuration, and commands behind the `lee` binary.

pub mod commands;
pub mod config;
pub mod formats;
