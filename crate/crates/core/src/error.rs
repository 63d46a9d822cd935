//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by any stage of the pipeline.
#[derive(Error, Debug)]
pub enum Error {
    /// A required CSV column is absent or the header is malformed.
    #[error("schema error: {0}")]
    Schema(String),

    /// A data row failed to parse; carries the 1-based line number.
    #[error("row error at line {line}: {message}")]
    Row { line: usize, message: String },

    /// Duplicate or out-of-order records after sorting.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A date or value fell outside the permitted range.
    #[error("range error: {0}")]
    Range(String),

    /// Two series that must share dates do not.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// Not enough observations for the requested computation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A denominator collapsed below the numeric guard.
    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),

    /// A series or matrix had no usable variation.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Tensor/matrix dimensions disagree.
    #[error("shape error: {0}")]
    Shape(String),

    /// Non-finite value where a finite one is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Invalid argument or empty input.
    #[error("input error: {0}")]
    Input(String),

    /// Training diverged; carries the epoch at which loss became non-finite.
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// Normal equations were singular and inconsistent.
    #[error("conditioning error: {0}")]
    Conditioning(String),

    /// Model parameters violate their invariants.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Pipeline configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// A pipeline stage failed; carries the stage name and the cause.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// Run reports could not be merged into tables.
    #[error("aggregation error: {0}")]
    Aggregation(String),

    /// Serialized model container is unreadable or has the wrong version.
    #[error("model container error: {0}")]
    ModelContainer(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wraps an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
