use std::path::PathBuf;

use thiserror::Error;

use crate::env::Domain;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid {width}x{height} is too small: {reason}")]
    DimensionTooSmall {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operation `{op}` is not defined for domain {domain}")]
    WrongDomain { op: &'static str, domain: Domain },

    #[error("channel mismatch: generator expects {expected} channels, grid has {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("parameter vector has length {actual}, architecture needs {expected}")]
    ParamCount { expected: usize, actual: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    #[error("repair budget exhausted after {work} work units without reaching a valid environment")]
    BudgetExhausted { work: u64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("environment is not valid: {0}")]
    InvalidEnvironment(String),

    #[error("{agents} agents requested but only {tiles} traversable tiles are available")]
    TooManyAgents { agents: usize, tiles: usize },

    #[error("no candidate goal: {0}")]
    NoCandidateGoal(String),

    #[error("degenerate maze: {0}")]
    DegenerateMaze(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
