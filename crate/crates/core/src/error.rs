use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("encoding error: {0}")]
    Encode(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("sample rate mismatch: waveform at {actual} Hz, expected {expected} Hz")]
    RateMismatch { expected: f64, actual: f64 },

    #[error("unsupported resampling ratio {0} -> {1} Hz")]
    BadRatio(f64, f64),

    #[error("not enough samples: need {need}, have {have}")]
    InsufficientSamples { need: usize, have: usize },

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("singular linear system")]
    Singular,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unknown location id {0}")]
    UnknownLocation(u32),

    #[error("survey error: {0}")]
    Survey(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training error: {0}")]
    Train(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
