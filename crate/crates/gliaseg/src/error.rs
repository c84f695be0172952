//! Error type shared by all modules.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// A parameter is outside its documented domain (non-positive sigma,
    /// empty scale list, negative weight, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Volume / mask / field dimensions are inconsistent.
    #[error("shape error: {0}")]
    Shape(String),

    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Input has no usable structure (e.g. constant volume fed to Otsu).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Both initial seeds came out empty; the pipeline cannot start.
    #[error("empty seed: {0}")]
    EmptySeed(String),

    /// Metric is undefined for the given input (e.g. empty mask).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Unsupported or malformed file content.
    #[error("format error: {0}")]
    Format(String),

    /// File payload does not match the length promised by its header.
    #[error("payload length error: expected {expected} bytes, found {actual}")]
    PayloadLength { expected: usize, actual: usize },

    /// Input path does not exist.
    #[error("input not found: {0}")]
    InputNotFound(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-parseable category token, one per variant.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter-error",
            Error::Shape(_) => "shape-error",
            Error::Numeric(_) => "numeric-error",
            Error::Degenerate(_) => "degenerate-input",
            Error::EmptySeed(_) => "empty-seed",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::Format(_) => "format-error",
            Error::PayloadLength { .. } => "payload-length",
            Error::InputNotFound(_) => "input-not-found",
            Error::Io(_) => "io-error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
