use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("score at index {index} is {value}, expected a finite value in [0, 1]")]
    Range { index: usize, value: f64 },

    #[error("box {0} lies outside the volume bounds")]
    Bounds(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("significance undefined: kappa/nu = {ratio} does not exceed p = {p}")]
    Condition { ratio: f64, p: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
