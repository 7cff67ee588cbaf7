//! Piecewise-quadratic surrogate landscape around an embedded kernel copy.
//!
//! With the data reduced to a single embedded copy of the ground-truth
//! kernel and the cross-shift coupling of the quadratic term dropped, the
//! activation minimizer is an entrywise soft threshold of the shift
//! correlation profile, and the marginal objective becomes an explicit
//! function of `a`: quadratic on every region with a fixed sign pattern.
//! That makes the full Riemannian first- and second-order calculus exact,
//! which is what the geometry checks in the test suites lean on.

use crate::conv::{corr, corr_raw};
use crate::error::{Result, SbdError};
use crate::landscape::{project_out, require_l2_sphere, RiemannianDerivatives, SignPattern};
use crate::prox::soft_threshold_scalar;
use crate::signal::{inject, shift_truncation, Dims, Kernel, Shift, Signal};
use crate::util::linalg;

/// Surrogate objective for a fixed ground-truth kernel, penalty level, and
/// embedding length. Evaluation points are unit-sphere kernels of the same
/// shape as the ground truth.
pub struct Surrogate {
    a0: Kernel,
    a0_embedded: Signal,
    m: Dims,
    lambda: f64,
}

impl Surrogate {
    pub fn new(a0: Kernel, m: Dims, lambda: f64) -> Result<Surrogate> {
        require_l2_sphere(&a0, "ground-truth kernel")?;
        if !(lambda > 0.0) {
            return Err(SbdError::InvalidArgument(format!(
                "lambda must be > 0, got {lambda}"
            )));
        }
        let a0_embedded = inject(&a0, m)?;
        Ok(Surrogate { a0, a0_embedded, m, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kernel_dims(&self) -> Dims {
        self.a0.dims()
    }

    pub fn signal_dims(&self) -> Dims {
        self.m
    }

    pub fn ground_truth(&self) -> &Kernel {
        &self.a0
    }

    fn check_point(&self, a: &Kernel) -> Result<()> {
        require_l2_sphere(a, "evaluation point")?;
        if a.dims() != self.a0.dims() {
            return Err(SbdError::DimMismatch(format!(
                "evaluation point {:?} vs ground truth {:?}",
                a.dims(),
                self.a0.dims()
            )));
        }
        Ok(())
    }

    /// Shift correlation profile `c(a)`: entry `i` is the inner product of
    /// `a` with the `i`-th reversed-shift window of the embedded ground
    /// truth. Linear in `a`.
    pub fn profile(&self, a: &Kernel) -> Result<Vec<f64>> {
        self.check_point(a)?;
        Ok(corr(a, &self.a0_embedded)?.into_vec())
    }

    /// Surrogate activation minimizer: entrywise soft threshold of the
    /// profile.
    pub fn x_star(&self, a: &Kernel) -> Result<Signal> {
        let x: Vec<f64> = self
            .profile(a)?
            .into_iter()
            .map(|c| soft_threshold_scalar(c, self.lambda))
            .collect();
        Signal::new(x, self.m)
    }

    /// Sign pattern of the activation minimizer at `a`.
    pub fn region(&self, a: &Kernel) -> Result<SignPattern> {
        Ok(SignPattern::classify(&self.profile(a)?, self.lambda))
    }

    /// Surrogate value by direct evaluation: plug the soft-thresholded
    /// activation into the decoupled objective.
    pub fn value(&self, a: &Kernel) -> Result<f64> {
        let c = self.profile(a)?;
        let mut quad = 0.0;
        let mut cross = 0.0;
        let mut l1 = 0.0;
        for &ci in &c {
            let xi = soft_threshold_scalar(ci, self.lambda);
            quad += xi * xi;
            cross += xi * ci;
            l1 += xi.abs();
        }
        Ok(0.5 + 0.5 * quad - cross + self.lambda * l1)
    }

    /// Value of the quadratic piece attached to `sigma`, evaluated at `a`:
    /// `0.5 - 0.5 sum_{i in supp(sigma)} (c_i - lambda sigma_i)^2`. Agrees
    /// with [`Surrogate::value`] when `sigma` is the region of `a`.
    pub fn value_quadratic(&self, a: &Kernel, sigma: &SignPattern) -> Result<f64> {
        let c = self.profile(a)?;
        self.check_pattern(sigma, c.len())?;
        let mut s = 0.0;
        for &i in sigma.support() {
            let d = c[i] - self.lambda * sigma.sigma()[i] as f64;
            s += d * d;
        }
        Ok(0.5 - 0.5 * s)
    }

    fn check_pattern(&self, sigma: &SignPattern, m: usize) -> Result<()> {
        if sigma.sigma().len() != m {
            return Err(SbdError::DimMismatch(format!(
                "sign pattern length {} vs signal length {m}",
                sigma.sigma().len()
            )));
        }
        Ok(())
    }

    /// First- and second-order Riemannian calculus of the quadratic piece
    /// attached to `sigma` at the point `a`. Exact on the closure of the
    /// region of `sigma`; evaluable anywhere for boundary studies.
    pub fn derivatives(&self, a: &Kernel, sigma: &SignPattern) -> Result<RiemannianDerivatives> {
        let c = self.profile(a)?;
        self.check_pattern(sigma, c.len())?;

        // Residual of the active profile entries against their sign targets.
        let mut active = vec![0.0; c.len()];
        let mut s = 0.0;
        for &i in sigma.support() {
            let d = c[i] - self.lambda * sigma.sigma()[i] as f64;
            active[i] = d;
            s += d * d;
        }
        let value = 0.5 - 0.5 * s;

        // Euclidean gradient: minus the adjoint profile map applied to the
        // active residual.
        let k = self.a0.dims();
        let mut euclid_grad = vec![0.0; k.len()];
        corr_raw(
            &active,
            self.m,
            self.a0_embedded.as_slice(),
            self.m,
            k,
            &mut euclid_grad,
        );
        for g in euclid_grad.iter_mut() {
            *g = -*g;
        }
        let riem_grad = project_out(&euclid_grad, a.as_slice());

        // Curvature scalar <a, grad>: the quadratic form plus linear term.
        let ch = linalg::dot(a.as_slice(), &euclid_grad);

        let a_vec = a.as_slice().to_vec();
        let support = sigma.support().to_vec();
        let a0_emb = self.a0_embedded.as_slice().to_vec();
        let m = self.m;
        let hess = move |delta: &[f64]| -> Vec<f64> {
            let t = project_out(delta, &a_vec);
            // Profile of the tangent direction, restricted to the support.
            let mut prof = vec![0.0; m.len()];
            corr_raw(&t, k, &a0_emb, m, m, &mut prof);
            let mut masked = vec![0.0; m.len()];
            for &i in &support {
                masked[i] = prof[i];
            }
            let mut mt = vec![0.0; k.len()];
            corr_raw(&masked, m, &a0_emb, m, k, &mut mt);
            for v in mt.iter_mut() {
                *v = -*v;
            }
            let mut out = project_out(&mt, &a_vec);
            for (o, ti) in out.iter_mut().zip(&t) {
                *o -= ch * ti;
            }
            out
        };

        Ok(RiemannianDerivatives {
            value,
            euclid_grad,
            riem_grad,
            hess: Box::new(hess),
        })
    }
}

/// Deviation from orthonormality of the normalized shift-truncation windows
/// indexed by `support`: the operator norm of `W* W - I` where column `j`
/// of `W` is the unit-normalized window of the reversed shift by
/// `support[j]`. Zero means the active shifts are exactly uncorrelated.
pub fn w_matrix_orthogonality(a0: &Kernel, support: &[usize], m: Dims) -> Result<f64> {
    require_l2_sphere(a0, "ground-truth kernel")?;
    let mm = match m {
        Dims::One(mm) => mm,
        Dims::Two(..) => {
            return Err(SbdError::Unsupported(
                "shift-window orthogonality is defined for 1-d kernels".into(),
            ))
        }
    };
    if support.is_empty() {
        return Err(SbdError::InvalidArgument("empty support".into()));
    }
    if support.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SbdError::InvalidArgument(
            "support indices must be strictly ascending".into(),
        ));
    }
    if *support.last().unwrap() >= mm {
        return Err(SbdError::InvalidArgument(format!(
            "support index {} out of range for signal length {mm}",
            support.last().unwrap()
        )));
    }

    let cols: Vec<Kernel> = support
        .iter()
        .map(|&i| shift_truncation(a0, Shift::One(-(i as i64)), m))
        .collect::<Result<Vec<_>>>()?;

    let n = cols.len();
    let mut gram_dev = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let g = linalg::dot(cols[i].as_slice(), cols[j].as_slice());
            gram_dev[i * n + j] = if i == j { g - 1.0 } else { g };
        }
    }
    Ok(linalg::symmetric_operator_norm(&gram_dev, n))
}
