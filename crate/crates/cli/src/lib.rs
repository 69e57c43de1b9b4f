//! Command-line companion of `cqnls-core`: configuration, file formats,
//! reference oracles, the invariant suite and the subcommand
//! implementations.

pub mod checks;
pub mod commands;
pub mod config;
pub mod env;
pub mod error;
pub mod files;
pub mod format;
pub mod oracle;

pub use cqnls_core as core;
