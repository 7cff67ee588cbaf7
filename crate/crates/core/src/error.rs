//! Error type shared across the library.
//!
//! Solver errors that can carry a best-effort iterate do so, so callers can
//! distinguish "no answer" from "answer that missed its tolerance".

use thiserror::Error;

use crate::prox::ActivationSolve;
use crate::signal::Kernel;

#[derive(Debug, Error)]
pub enum SbdError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shift truncation at tau = {tau:?} is identically zero")]
    ZeroTruncation { tau: (i64, i64) },

    #[error(
        "inner solver stopped after {iterations} iterations with gap {gap:.3e} (tol {tol:.3e})"
    )]
    InnerNoConvergence {
        iterations: usize,
        gap: f64,
        tol: f64,
        /// Best iterate found; valid but out of tolerance.
        best: Box<ActivationSolve>,
    },

    #[error("line search failed: no decrease above step {step:.3e}")]
    LineSearchFailure { step: f64 },

    #[error("outer iteration limit {max_iters} reached with gradient norm {grad_norm:.3e}")]
    OuterNoConvergence {
        max_iters: usize,
        grad_norm: f64,
        /// Best iterate found; feasible but not stationary to tolerance.
        best: Box<Kernel>,
    },

    #[error("outer iteration limit {max_iters} reached with joint gradient norm {grad_norm:.3e}")]
    BankNoConvergence {
        max_iters: usize,
        grad_norm: f64,
        /// Best kernel bank found; feasible but not stationary to tolerance.
        bank: Vec<Kernel>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, SbdError>;
