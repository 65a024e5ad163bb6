use std::fmt;
use std::process::ExitCode;

use trustgrid::sim::{ConfigError, ScenarioError};

/// Failure of one command, mapped onto the documented exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent input, or an unusable output
    /// directory. Exit code 2.
    Config(String),
    /// The run started but could not finish. Exit code 3.
    Abort(String),
}

impl CliError {
    pub fn config(msg: impl fmt::Display) -> Self {
        Self::Config(msg.to_string())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Config(_) => ExitCode::from(2),
            Self::Abort(_) => ExitCode::from(3),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(msg) => write!(f, "config error: {msg}"),
            Self::Abort(msg) => write!(f, "run aborted: {msg}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(c) => c.into(),
            other => Self::Abort(other.to_string()),
        }
    }
}
