use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error(
        "Fock cutoff too small: top-level population {tail:.3e} exceeds 1e-8 at n_max = {n_max}; \
         try n_max >= {suggested}"
    )]
    CutoffTooSmall { tail: f64, n_max: usize, suggested: usize },

    #[error("norm underflow at step {step}: |psi|^2 = {norm_sq:.3e}")]
    NormUnderflow { step: u64, norm_sq: f64 },

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: u64 },

    #[error("expectation value has imaginary residual {residual:.3e}; operator is not Hermitian")]
    NotHermitian { residual: f64 },

    #[error("covariance matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    Asymmetric { asymmetry: f64 },

    #[error("covariance lost positive semidefiniteness at step {step}: min eigenvalue {min_eig:.3e}")]
    NotPositiveSemidefinite { step: u64, min_eig: f64 },

    #[error("state is not normalized (|psi|^2 = {norm_sq})")]
    NotNormalized { norm_sq: f64 },

    #[error("empty series")]
    EmptySeries,

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("parameter mismatch: {0}")]
    ParameterMismatch(String),

    #[error("config error on line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(String),
}

impl Error {
    /// True for failures of the numerical integration (as opposed to bad
    /// input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CutoffTooSmall { .. }
                | Error::NormUnderflow { .. }
                | Error::NonFinite { .. }
                | Error::NotPositiveSemidefinite { .. }
        )
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
