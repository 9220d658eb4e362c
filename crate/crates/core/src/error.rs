use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("{instrument} expects {expected} items, got {got}")]
    ItemCount {
        instrument: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("item {index} has value {value}, expected 0..=3")]
    ItemOutOfRange { index: usize, value: i64 },

    #[error("score {total} is outside the band table (0..={max_total})")]
    ScoreOutOfRange { total: i64, max_total: u32 },

    #[error("malformed device address {0:?}")]
    InvalidAddress(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("no parseable records in input")]
    EmptyInput,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    RawIo(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("graphml: {0}")]
    GraphMl(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad configuration or input files rather than
    /// by a failing pipeline stage.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Toml(_) | Error::Validation(_) | Error::InvalidAddress(_)
        )
    }
}
