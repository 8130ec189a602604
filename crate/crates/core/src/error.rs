use thiserror::Error;

use crate::expr::ExprError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("config error: {0}")]
    Config(String),
    #[error("matrix function is not symmetric: entry ({i},{j}) differs from ({j},{i}) at x = {x}")]
    Asymmetric { i: usize, j: usize, x: f64 },
    #[error("non-finite matrix entry at x = {x}")]
    NonFiniteEntry { x: f64 },
    #[error("asymptotic matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("step size underflow at x = {x}")]
    StepSizeUnderflow { x: f64 },
    #[error("non-finite state at x = {x}")]
    NonFiniteState { x: f64 },
    #[error("no decaying directions (n = m); detection impossible")]
    EmptyFrame,
    #[error("decay-rate window too short: {0}")]
    WindowTooShort(String),
    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("matched subspace has rank {found}, expected {expected}")]
    RankUnexpected { expected: usize, found: usize },
    #[error("U*⊥(0) is not orthogonal to the matched range (residual {0:e})")]
    UperpNotInKernel(f64),
    #[error("adjoint solution {k} grows too fast near x = {x}")]
    AdjointGrowth { k: usize, x: f64 },
    #[error("fitted decay rate {rate} is below the required {required}")]
    DecayCheck { rate: f64, required: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerical pipeline, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepSizeUnderflow { .. }
                | Error::NonFiniteState { .. }
                | Error::NonFiniteEntry { .. }
                | Error::QuadratureFailure(_)
                | Error::RankUnexpected { .. }
                | Error::UperpNotInKernel(_)
                | Error::AdjointGrowth { .. }
                | Error::DecayCheck { .. }
                | Error::WindowTooShort(_)
                | Error::EmptyFrame
        )
    }
}
