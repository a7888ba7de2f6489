use thiserror::Error;

/// Errors raised by the geometry kernels and the stationarity tests.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cut locus: {0}")]
    CutLocus(String),

    #[error("outside injectivity domain: {0}")]
    Domain(String),

    #[error("data not contained in an open hemisphere: {0}")]
    Hemisphere(String),

    #[error("ill-conditioned matrix: {0}")]
    IllConditioned(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("at index {index}: {source}")]
    AtIndex { index: usize, source: Box<Error> },
}

impl Error {
    /// Stable machine-readable identifier of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::CutLocus(_) => "cut_locus",
            Error::Domain(_) => "domain",
            Error::Hemisphere(_) => "hemisphere",
            Error::IllConditioned(_) => "ill_conditioned",
            Error::Degenerate(_) => "degenerate",
            Error::AtIndex { source, .. } => source.code(),
        }
    }

    /// Strips index wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIndex { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn at(self, index: usize) -> Error {
        Error::AtIndex {
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
