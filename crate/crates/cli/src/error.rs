use std::fmt;
use std::process::ExitCode;

use dereco::dereco::DerecoError;
use dereco::eval::EvalError;
use dereco::mappo::MappoError;
use dereco::transportsim::SimError;

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad command line (exit 1).
    Usage(String),
    /// Invalid configuration or input (exit 2).
    Config(String),
    /// Anything that went wrong while running (exit 3).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Usage(_) => 1,
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(m) => Self::Config(m),
            e => Self::Runtime(e.to_string()),
        }
    }
}

impl From<MappoError> for CliError {
    fn from(e: MappoError) -> Self {
        match e {
            MappoError::Config(m) => Self::Config(m),
            MappoError::Sim(e) => e.into(),
            e => Self::Runtime(e.to_string()),
        }
    }
}

impl From<DerecoError> for CliError {
    fn from(e: DerecoError) -> Self {
        match e {
            DerecoError::Config(m) => Self::Config(m),
            DerecoError::Sim(e) => e.into(),
            DerecoError::Mappo(e) => e.into(),
            e => Self::Runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(m) => Self::Config(m),
            EvalError::Sim(e) => e.into(),
            EvalError::Mappo(e) => e.into(),
            e => Self::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
