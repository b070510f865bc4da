use alloc::string::String;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Input data failed validation (non-finite samples, ragged shapes).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The signal carries no information for the requested quantity,
    /// e.g. a constant channel.
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),
    /// A graph row has zero (or negative) degree.
    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),
    /// Tensor or matrix dimensions do not conform.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Batch statistics cannot be computed.
    #[error("statistics error: {0}")]
    Statistics(String),
    /// API misuse such as calling backward on a non-scalar.
    #[error("usage error: {0}")]
    Usage(String),
    /// Training produced a non-finite loss or gradient.
    #[error("training aborted: {0}")]
    TrainingAborted(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
