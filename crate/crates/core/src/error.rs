use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("generator is not anti-Hermitian (max deviation {0:.3e})")]
    NotAntiHermitian(f64),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error(
        "series exponential did not converge after {terms} terms (last term ratio {ratio:.3e}); \
         reduce the coupling or raise the cutoff"
    )]
    SeriesDivergence { terms: usize, ratio: f64 },

    #[error("postselection probability {0:.3e} is too small to condition on")]
    DegeneratePostselection(f64),

    #[error("weak value undefined: pre- and postselected states are orthogonal")]
    UndefinedWeakValue,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty grid")]
    EmptyGrid,

    #[error("oscillator cutoff {cutoff} insufficient (norm loss {loss:.3e})")]
    CutoffInsufficient { cutoff: usize, loss: f64 },

    #[error("regime violation: {0}")]
    RegimeViolation(String),

    #[error("quadrature self-test failed: {0}")]
    Quadrature(String),
}
