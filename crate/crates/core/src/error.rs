use thiserror::Error;

/// Errors raised by the numerical routines and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("normalization error: density sums to {sum} (tolerance {tol:e})")]
    Normalization { sum: f64, tol: f64 },

    #[error("precision error: {0}")]
    Precision(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("zero of 1 - K_b on the contour |z| = {radius} (min |f| = {min_modulus:e})")]
    OnContour { radius: f64, min_modulus: f64 },

    #[error("winding number did not converge on |z| = {radius} within {budget} samples")]
    NonConvergence { radius: f64, budget: usize },

    #[error("root count mismatch: Newton found {found}, argument principle counted {counted}")]
    Mismatch { found: usize, counted: usize },

    #[error("root {re} + {im}i is not simple (|K_b'| = {derivative:e})")]
    Multiplicity { re: f64, im: f64, derivative: f64 },

    #[error("critical tilt predicate is constant on [{lo}, {hi}]")]
    PredicateConstant { lo: f64, hi: f64 },

    #[error("degenerate law: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 usage, 2 precision, 3 singularity/on-contour,
    /// 4 count mismatch, 5 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Domain(_) | Error::Normalization { .. } => 1,
            Error::Precision(_) | Error::InsufficientData(_) => 2,
            Error::Singularity(_)
            | Error::OnContour { .. }
            | Error::Multiplicity { .. }
            | Error::Degenerate(_) => 3,
            Error::Mismatch { .. } | Error::NonConvergence { .. } => 4,
            Error::PredicateConstant { .. } | Error::Io(_) | Error::Json(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
