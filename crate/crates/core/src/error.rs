use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal is constant (standard deviation below 1e-12)")]
    ConstantSignal,
    #[error("invalid sample rate: {0} Hz")]
    InvalidRate(f64),
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("window of {window} samples does not fit in {len} samples")]
    WindowTooLong { window: usize, len: usize },

    #[error("invalid band {low_hz}..{high_hz} Hz at sample rate {sample_rate_hz} Hz")]
    InvalidBand {
        low_hz: f64,
        high_hz: f64,
        sample_rate_hz: f64,
    },
    #[error("filter design failed: {0}")]
    DesignFailure(String),
    #[error("signal too short: need more than {needed} samples, got {len}")]
    SignalTooShort { needed: usize, len: usize },
    #[error("invalid frequency {0} Hz")]
    InvalidFrequency(f64),

    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("trace too short: need {needed} samples, got {len}")]
    TraceTooShort { needed: usize, len: usize },
    #[error("channel mean below 1e-12 in window starting at sample {0}")]
    DegenerateWindow(usize),
    #[error("covariance matrix is singular (condition number {0:e})")]
    SingularCovariance(f64),
    #[error("trace matrix has rank < 2")]
    DegenerateTrace,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input too short: need at least {needed} samples, got {len}")]
    InputTooShort { needed: usize, len: usize },
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no clock label transitions")]
    NoTransitions,
    #[error("insufficient overlap: {overlap} samples, need {needed}")]
    InsufficientOverlap { overlap: usize, needed: usize },
    #[error("invalid bandwidth {0}")]
    InvalidBandwidth(f64),
    #[error("no complete evaluation segments")]
    NoSegments,

    #[error("{path}:{line}: {msg}")]
    Schema {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("timestamps are not strictly increasing at line {line}")]
    NonMonotoneTimestamps { line: usize },
    #[error("biomarker {name} = {value} outside sanity range [{min}, {max}]")]
    BiomarkerOutOfRange {
        name: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid repetitions: {0}")]
    InvalidRepetitions(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(path: &std::path::Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Schema {
            path: path.display().to_string(),
            line,
            msg: msg.into(),
        }
    }
}
