//! Command-line and HTTP front ends for the fair ranking engine.

pub mod args;
pub mod commands;
pub mod server;

use std::time::{SystemTime, UNIX_EPOCH};

use fairrank_core::Error;

/// Exit status for a request the user got wrong.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for a pipeline failure on valid input.
pub const EXIT_PIPELINE: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Engine(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Engine(e) if e.is_config() => EXIT_CONFIG,
            CliError::Engine(_) => EXIT_PIPELINE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => f.write_str(m),
            CliError::Engine(e) => write!(f, "{} ({} phase): {e}", e.code(), e.phase()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Engine(e)
    }
}

/// Seconds since the epoch for `created_at`. Honours `SOURCE_DATE_EPOCH` so
/// repeated invocations can produce identical records.
pub fn clock() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        })
}
