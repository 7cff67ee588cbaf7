//! Short-and-sparse blind deconvolution over the sphere.
//!
//! Given an observation `y = a0 (*) x0` of a short kernel circularly
//! convolved with a sparse activation, this crate recovers the pair up to
//! the intrinsic signed-shift ambiguity. It provides:
//!
//! - the cyclic signal algebra (convolution, correlation, shifts,
//!   zero-padded embeddings) in [`signal`] and [`conv`];
//! - penalized activation solves (l1 / huber FISTA) in [`prox`];
//! - the marginalized objective, its sphere calculus, the piecewise
//!   quadratic surrogate, and lp/lq variants in [`landscape`];
//! - the two-stage solver (smoothed first stage on the short sphere, then a
//!   lifted continuation ladder) in [`solver`];
//! - convolutional dictionary learning and gradient-domain image deblurring
//!   in [`extensions`];
//! - synthesis, error metrics, phase sweeps, landscape maps, and
//!   hypothesis-checking oracles in [`experiments`];
//! - file formats (binary signals, CSV, PGM, JSON reports) in [`io`].
//!
//! Outer loops (sweep cells, grid evaluations, multistarts) are
//! data-parallel behind the default `parallel` feature and fall back to
//! sequential loops without it; results are identical either way.

pub mod conv;
pub mod error;
pub mod experiments;
pub mod extensions;
pub mod landscape;
pub mod prox;
pub mod signal;
pub mod solver;
pub mod util;

pub use error::{Result, SbdError};
pub use signal::{Dims, Kernel, NormConstraint, Shift, Signal};
