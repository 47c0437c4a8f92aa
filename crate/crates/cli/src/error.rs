//! CLI failures and their exit codes.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Exit code 2.
    Config(String),
    /// Exit code 3.
    Numerical(String),
    /// Exit code 4.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical abort: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<svgpvae::Error> for CliError {
    fn from(e: svgpvae::Error) -> Self {
        use svgpvae::Error as E;
        match e {
            E::NonFinite(_) | E::NotPositiveDefinite { .. } | E::CapExceeded { .. } => CliError::Numerical(e.to_string()),
            E::Io(_) | E::Idx(_) | E::Checkpoint(_) => CliError::Io(e.to_string()),
            E::Config(m) => CliError::Config(m),
            E::Shape(_) | E::InvalidArgument(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
