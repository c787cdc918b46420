use num_complex::Complex64;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("coefficient matrix A is zero")]
    ZeroA,
    #[error("A is not Hermitian: |A - A*| = {asym:.3e} exceeds 1e-8 |A|")]
    NonHermitian { asym: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("m = {m} lies within 1e-13 of a pole")]
    PoleProximity { m: Complex64 },
    #[error("no convergence at z = {z}: residual {residual:.3e}")]
    NoConvergence { z: Complex64, residual: f64 },
    #[error("analytic and numeric root verdicts disagree on the {side} side")]
    InconsistentClassification { side: &'static str },
    #[error("direction is real up to a phase; s is undefined")]
    RealDirection,
    #[error("density mass {mass} deviates from 1 by more than 1e-3")]
    MassDeficit { mass: f64 },
    #[error("only {found} grid points in the fit window (need 20)")]
    InsufficientPoints { found: usize },
    #[error("A is singular; use the regularized linearization")]
    SingularA,
    #[error("stability analysis excludes shifted Wigner squares")]
    WignerSquareUnsupported,
    #[error("assembled polynomial asymmetric: relative {ratio:.3e}")]
    AsymmetryBlowup { ratio: f64 },
    #[error("eigensolver failed to converge")]
    ConvergenceFailure,
    #[error("trial {index}: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Whether the error stems from the user's input rather than a numerical failure.
    pub fn is_input(&self) -> bool {
        match self {
            Error::ZeroA
            | Error::NonHermitian { .. }
            | Error::DimensionMismatch(_)
            | Error::NonFinite(_)
            | Error::InvalidInput(_)
            | Error::SingularA
            | Error::WignerSquareUnsupported
            | Error::RealDirection
            | Error::Json(_) => true,
            Error::Trial { source, .. } => source.is_input(),
            _ => false,
        }
    }
}
