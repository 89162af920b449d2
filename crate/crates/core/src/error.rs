use thiserror::Error;

use crate::world::AgentId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid control input: {0}")]
    InvalidControl(String),
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),
    #[error("invalid depth {0} (must be > 0)")]
    InvalidDepth(f64),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("missing controller input: {0}")]
    MissingInput(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no agents alive")]
    NoAgentsAlive,
    #[error("empty window: {0}")]
    EmptyWindow(String),
    #[error("log schema error in {file}: missing column `{column}`")]
    Schema { file: String, column: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
