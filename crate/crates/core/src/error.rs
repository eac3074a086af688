use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("phase vector has {got} entries but the array has {expected} transducers")]
    PhaseCount { expected: usize, got: usize },

    #[error("sample {index} coincides with transducer {transducer}")]
    CoincidentSample { index: usize, transducer: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("zero-norm input to {0}")]
    ZeroNorm(&'static str),

    #[error("empty region: {0}")]
    EmptyRegion(&'static str),

    #[error("background luminance is zero")]
    ZeroBackground,

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidParameter(detail.into())
    }
}
