use thiserror::Error;

/// Errors raised by the library. Each variant maps to a stable category
/// string used by the command-line front end.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("index {index} out of range 1..={bound}")]
    Range { index: usize, bound: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("dense matrix cap exceeded: {0}")]
    Size(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    /// Machine-parsable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Range { .. } => "range",
            Error::Shape(_) => "shape",
            Error::Size(_) => "size",
            Error::Infeasible(_) => "infeasible",
            Error::Degenerate(_) => "degenerate",
            Error::NonFinite(_) => "non-finite",
            Error::Invalid(_) => "invalid",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
