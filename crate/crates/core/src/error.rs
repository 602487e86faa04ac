use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported atom number {0}: must be even and at least 2")]
    InvalidAtomNumber(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigensolver failed on a {dim}x{dim} symmetric tridiagonal matrix (max |diag| {max_diag:e}, max |offdiag| {max_offdiag:e})")]
    Eigensolver {
        dim: usize,
        max_diag: f64,
        max_offdiag: f64,
    },

    #[error("bisection for xi = {target} did not converge after {iterations} iterations: lambda bracket [{lo}, {hi}]")]
    BisectionFailed {
        target: f64,
        iterations: usize,
        lo: f64,
        hi: f64,
    },

    #[error("outcome index {index} has probability {prob:e} but derivative {deriv:e}; 0/0 boundary, retry at a different theta")]
    SingularOutcome { index: usize, prob: f64, deriv: f64 },

    #[error("observed outcomes are impossible at every grid phase")]
    ImpossibleOutcomes,

    #[error("{discarded} of {trials} estimation trials discarded (limit 5%)")]
    TooManyDiscarded { discarded: usize, trials: usize },

    #[error("degenerate fit data: {0}")]
    DegenerateFit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Eigensolver { .. }
                | Error::BisectionFailed { .. }
                | Error::SingularOutcome { .. }
                | Error::ImpossibleOutcomes
                | Error::TooManyDiscarded { .. }
                | Error::DegenerateFit(_)
        )
    }
}
