use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid numeric context: {0}")]
    InvalidContext(String),

    #[error("operands live in different numeric contexts")]
    ContextMismatch,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("argument must be nonzero: {0}")]
    ZeroArgument(&'static str),

    #[error("series is numerically zero")]
    NumericallyZero,

    #[error("pole hit at z = {z}")]
    Pole { z: Complex64 },

    #[error("matrix is numerically singular: {0}")]
    Singular(String),

    #[error("resonant eigenvalues {lambda} and {mu}: ratio is q^{n}")]
    Resonant { lambda: Complex64, mu: Complex64, n: i64 },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("forbidden summation direction; nearest forbidden point {nearest}")]
    ForbiddenDirection { nearest: Complex64 },

    #[error("series does not converge: {0}")]
    Divergence(String),

    #[error("contour integration failed: {0}")]
    Contour(String),

    #[error("not a section of the dual bundle (defect {defect:e})")]
    NotASection { defect: f64 },

    #[error("root finding failed: {0}")]
    RootCount(String),
}

impl Error {
    /// Stable machine-readable tag, used by the CLI and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidContext(_) => "InvalidContext",
            Error::ContextMismatch => "ContextMismatch",
            Error::Dimension(_) => "Dimension",
            Error::ZeroArgument(_) => "ZeroArgument",
            Error::NumericallyZero => "NumericallyZero",
            Error::Pole { .. } => "Pole",
            Error::Singular(_) => "Singular",
            Error::Resonant { .. } => "Resonant",
            Error::Unsupported(_) => "Unsupported",
            Error::ForbiddenDirection { .. } => "ForbiddenDirection",
            Error::Divergence(_) => "Divergence",
            Error::Contour(_) => "Contour",
            Error::NotASection { .. } => "NotASection",
            Error::RootCount(_) => "RootCount",
        }
    }
}
