use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} is before the start of the timeline ({start})")]
    UndefinedTime { t: f64, start: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("unknown setting label {0:?}")]
    UnknownLabel(String),

    #[error("label {id:?} declared with two different angles ({first} and {second})")]
    ConflictingLabel { id: String, first: f64, second: f64 },

    #[error("unknown model {0:?}")]
    UnknownModel(String),

    #[error("model {0:?} is nonlocal and exposes no hidden-variable functions")]
    UnsupportedModel(String),

    #[error("unsupported objective: {0}")]
    UnsupportedObjective(String),

    #[error("missing correlation cell {0}")]
    MissingCell(String),

    #[error("cell {key} has {count} trials, fewer than the required {min_count}")]
    InsufficientCell {
        key: String,
        count: u64,
        min_count: u64,
    },

    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),

    #[error("probability {value} for {what} is outside [0, 1]")]
    ProbabilityRange { what: String, value: f64 },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("malformed row {row} in {path}: {message}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("cannot parse angle {0:?}")]
    Angle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by absent or under-filled correlation data.
    pub fn is_insufficient_data(&self) -> bool {
        matches!(self, Error::MissingCell(_) | Error::InsufficientCell { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
