use alloc::string::String;

/// Errors raised by the forecasting, labeling, and learning routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("series has {len} observations, needs more than horizon {horizon}")]
    SeriesTooShort { len: usize, horizon: usize },
    #[error("{method} needs at least {needed} observations, got {got}")]
    InsufficientHistory {
        method: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("regression design matrix is rank deficient")]
    SingularDesign,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("scale denominator is zero")]
    DegenerateScale,
    #[error("naive benchmark error is zero")]
    DegenerateBenchmark,
    #[error("horizon {0} too short for correlation (needs >= 2)")]
    HorizonTooShort(usize),
    #[error("mean of Q and c sums to zero")]
    DegenerateBalance,
    #[error("QP solver stopped after {iterations} iterations (gradient norm {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss became non-finite at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },
    #[error("parameter {0} does not reach the loss")]
    DisconnectedGraph(usize),
    #[error("model parameters are missing or untrained")]
    UntrainedModel,
    #[error("no critical value tabulated for k = {0} (supported: 2..=10)")]
    UnsupportedK(usize),
    #[error("rank test input is fully tied")]
    DegenerateInput,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable machine-readable code for the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::SeriesTooShort { .. } => "SERIES_TOO_SHORT",
            Error::InsufficientHistory { .. } => "INSUFFICIENT_HISTORY",
            Error::SingularDesign => "SINGULAR_DESIGN",
            Error::LengthMismatch { .. } => "LENGTH_MISMATCH",
            Error::DegenerateScale => "DEGENERATE_SCALE",
            Error::DegenerateBenchmark => "DEGENERATE_BENCHMARK",
            Error::HorizonTooShort(_) => "HORIZON_TOO_SHORT",
            Error::DegenerateBalance => "DEGENERATE_BALANCE",
            Error::NotConverged { .. } => "NOT_CONVERGED",
            Error::ShapeMismatch(_) => "SHAPE_MISMATCH",
            Error::NonFiniteLoss { .. } => "NON_FINITE_LOSS",
            Error::DisconnectedGraph(_) => "DISCONNECTED_GRAPH",
            Error::UntrainedModel => "UNTRAINED_MODEL",
            Error::UnsupportedK(_) => "UNSUPPORTED_K",
            Error::DegenerateInput => "DEGENERATE_INPUT",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}
