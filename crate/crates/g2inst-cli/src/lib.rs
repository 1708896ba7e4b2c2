//! Driver for the `g2inst` command-line tool: configuration, commands,
//! verification suites and plot emission.

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;
pub mod verify;

use std::fmt;

use g2inst::metric_profiles::{AcProfile, MetricProfile, NumericProfile};

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments (exit 2).
    Config(String),
    /// The numerics failed or a check did not pass (exit 1).
    Numeric(String),
    /// Could not write an artifact (exit 1).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<g2inst::Error> for CliError {
    fn from(e: g2inst::Error) -> Self {
        match e {
            g2inst::Error::InvalidParams(_) | g2inst::Error::WrongBundle { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

/// The metric a command runs on: the tuned AC profile, or a plain integration at a fixed β.
pub enum Profile {
    Ac(AcProfile),
    Fixed(NumericProfile),
}

impl Profile {
    pub fn as_dyn(&self) -> &dyn MetricProfile {
        match self {
            Profile::Ac(p) => p,
            Profile::Fixed(p) => p,
        }
    }

    pub fn beta(&self) -> f64 {
        self.as_dyn().params().beta
    }
}
