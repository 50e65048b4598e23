use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid band {name}: [{low_hz}, {high_hz}] Hz at fs = {fs} Hz")]
    InvalidBand {
        name: String,
        low_hz: f64,
        high_hz: f64,
        fs: f64,
    },
    #[error("invalid filter order {0}")]
    InvalidOrder(usize),
    #[error("empty input")]
    EmptyInput,
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("window of {window} samples does not divide segment of {segment} samples")]
    InvalidWindow { window: usize, segment: usize },
    #[error("layout error at channel {channel}: {reason}")]
    Layout { channel: String, reason: String },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
