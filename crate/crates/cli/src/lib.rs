//! Subcommands of the `editsim` binary, callable as library functions.
//!
//! Errors are [`anyhow::Error`]s; [`exit_code`] maps them to the process
//! exit status: 1 for usage errors, 3 when no adapter session could be
//! initialized, 2 for everything else.

use std::fmt;

pub mod commands;
pub mod config;
pub mod manifest;
pub mod spec;

pub use config::{RunConfig, Sizes};
pub use spec::AdapterSpec;

/// Invalid flags, config values or adapter specs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// No adapter session could be started.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdapterInitError(pub String);

impl fmt::Display for AdapterInitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "adapter never initialized: {}", self.0)
    }
}

impl std::error::Error for AdapterInitError {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if cause.is::<AdapterInitError>() {
            return 3;
        }
    }
    2
}
