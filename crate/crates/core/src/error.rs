use std::path::PathBuf;

use thiserror::Error;

use crate::grid::Cell;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("position {0:?} lies outside the domain")]
    OutOfDomain([f64; 3]),
    #[error("cell {0:?} lies outside the grid")]
    CellOutOfRange(Cell),
    #[error("cell {0:?} is occupied")]
    Occupied(Cell),
    #[error("cells {0:?} and {1:?} are not adjacent")]
    NotAdjacent(Cell, Cell),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("no episode in progress")]
    NoEpisode,
    #[error("destination {destination:?} unreachable from {origin:?}")]
    Unreachable { origin: Cell, destination: Cell },
    #[error("free cell count {count} exceeds brute-force limit {limit}")]
    NodeLimitExceeded { count: usize, limit: usize },
    #[error("origin-destination sampling exhausted {0} retries")]
    SamplingExhausted(usize),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    PayloadLength { expected: usize, found: usize },
    #[error("no policy for {0}")]
    MissingPolicy(String),
    #[error("statistics: {0}")]
    Stats(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
