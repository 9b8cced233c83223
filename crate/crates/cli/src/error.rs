use std::fmt;

use serde::Serialize;

/// A failed command, classified for the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Input that cannot be read or decoded.
    Input(String),
    /// Output that cannot be written.
    Output(String),
    Config(String),
    Numeric(String),
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    detail: &'a str,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numeric(_) => 3,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "unreadable input",
            CliError::Output(_) => "unwritable output",
            CliError::Config(_) => "invalid config",
            CliError::Numeric(_) => "numeric failure",
        }
    }

    pub fn detail(&self) -> &str {
        match self {
            CliError::Input(s) | CliError::Output(s) | CliError::Config(s) | CliError::Numeric(s) => s,
        }
    }

    /// One-line JSON form for stderr.
    pub fn json_line(&self) -> String {
        serde_json::to_string(&ErrorLine { error: self.kind(), detail: self.detail() }).expect("plain strings serialize")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.detail())
    }
}

impl std::error::Error for CliError {}

impl From<convbf::Error> for CliError {
    fn from(e: convbf::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
