use std::fmt;

/// Failure classes, each with its process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Data(String),
    Query(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Query(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Query(m) => write!(f, "query error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
