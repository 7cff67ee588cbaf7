//! Objective functions over the kernel sphere and their Riemannian calculus.
//!
//! Three layers of objective live here:
//!
//! * the joint objective `psi(a, x) = 0.5 ||y - a (*) x||^2 + lambda r(x)`
//!   and its marginalization `phi(a) = min_x psi(a, x)` ([`marginal`]);
//! * the surrogate obtained by replacing the data with a single embedded
//!   kernel copy and dropping the cross-shift quadratic coupling, which is
//!   piecewise quadratic in `a` and admits closed-form derivatives
//!   ([`surrogate`]);
//! * the generalized `l^p` loss with an `l^q` sphere constraint ([`pq`]).
//!
//! Gradients and Hessians are Riemannian: tangent to the constraint sphere
//! at `a`, with the Hessian exposed as an apply-operator so large kernels
//! never materialize a dense matrix.

use std::fmt;

use crate::error::{Result, SbdError};
use crate::prox::{sign_support, soft_threshold_scalar};
use crate::signal::{Kernel, NormConstraint};
use crate::util::linalg;

pub mod marginal;
pub mod pq;
pub mod surrogate;

pub use marginal::{
    lambda_upper_bound, phi, phi_gradient, phi_huber_flat_region, psi, shift_gram,
    FlatRegionProbe, MarginalGradient,
};
pub use pq::{lq_normal_direction, pq_derivatives, pq_value};
pub use surrogate::{w_matrix_orthogonality, Surrogate};

/// Sign pattern of a thresholded correlation profile, together with its
/// support. Regions of the sphere with equal pattern share one quadratic
/// piece of the surrogate.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SignPattern {
    sigma: Vec<i8>,
    support: Vec<usize>,
}

impl SignPattern {
    pub fn from_signs(sigma: Vec<i8>) -> SignPattern {
        let support = sigma
            .iter()
            .enumerate()
            .filter(|(_, &s)| s != 0)
            .map(|(i, _)| i)
            .collect();
        SignPattern { sigma, support }
    }

    /// Classify `soft_threshold(profile, lambda)` entrywise. Uses the same
    /// support threshold as the activation solver, so both sides agree
    /// about which region a point is in.
    pub fn classify(profile: &[f64], lambda: f64) -> SignPattern {
        let x: Vec<f64> = profile
            .iter()
            .map(|&c| soft_threshold_scalar(c, lambda))
            .collect();
        SignPattern::from_signs(sign_support(&x))
    }

    pub fn sigma(&self) -> &[i8] {
        &self.sigma
    }

    /// Ascending support indices.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty()
    }
}

/// Value and Riemannian derivatives of an objective at a sphere point.
/// `hess_apply` maps tangent vectors to tangent vectors; inputs are
/// projected first, so callers may pass raw ambient directions.
pub struct RiemannianDerivatives {
    pub value: f64,
    pub euclid_grad: Vec<f64>,
    pub riem_grad: Vec<f64>,
    hess: Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl RiemannianDerivatives {
    pub fn hess_apply(&self, delta: &[f64]) -> Vec<f64> {
        (self.hess)(delta)
    }

    pub fn hess_quadratic_form(&self, delta: &[f64]) -> f64 {
        linalg::dot(delta, &self.hess_apply(delta))
    }
}

impl fmt::Debug for RiemannianDerivatives {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RiemannianDerivatives")
            .field("value", &self.value)
            .field("euclid_grad", &self.euclid_grad)
            .field("riem_grad", &self.riem_grad)
            .finish_non_exhaustive()
    }
}

/// `v - <v, xi> xi` for a unit normal `xi`.
pub(crate) fn project_out(v: &[f64], xi: &[f64]) -> Vec<f64> {
    let c = linalg::dot(v, xi);
    v.iter().zip(xi).map(|(&vi, &xii)| vi - c * xii).collect()
}

pub(crate) fn require_l2_sphere(a: &Kernel, what: &str) -> Result<()> {
    match a.constraint() {
        NormConstraint::L2Sphere => Ok(()),
        other => Err(SbdError::InvalidArgument(format!(
            "{what} must carry the unit l2 sphere constraint, got {other:?}"
        ))),
    }
}
