use std::path::PathBuf;

use thiserror::Error;

use crate::sharing::StoreRef;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("coordinate out of range: lat={lat}, lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },

    #[error("non-finite coordinate")]
    NonFinite,

    #[error("{0}")]
    EmptyInput(&'static str),

    #[error("need at least {required} known stores, found {found}")]
    InsufficientKnown { found: usize, required: usize },

    #[error("seed location for {0} is not among the stores with customers")]
    UnknownSeed(StoreRef),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {malformed} of {total} lines malformed (first: line {first_line}: {first_reason})")]
    TooManyMalformed {
        path: PathBuf,
        malformed: usize,
        total: usize,
        first_line: usize,
        first_reason: String,
    },

    #[error("{path}:{line}: {reason}")]
    BadRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}:{line}: conflicting coordinates for {store} ({distance:.1} m from earlier entry)")]
    SeedConflict {
        path: PathBuf,
        line: usize,
        store: StoreRef,
        distance: f64,
    },

    #[error("density table line {line}: {reason}")]
    DensityFormat { line: usize, reason: String },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Internal(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Csv(_) | Error::Internal(_) => ErrorKind::Internal,
            _ => ErrorKind::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
