//! Generalized loss/constraint calculus: entrywise `l^p` data fit with the
//! kernel constrained to the unit `l^q` sphere, both exponents at least 2.
//!
//! The activation is held fixed here; the derivatives are those of
//! `f(a) = (1/p) ||y - a (*) x||_p^p + lambda ||x||_1` restricted to the
//! `l^q` sphere. The tangent space at `a` is the orthogonal complement of
//! the unit normal `xi(a) = sign(a) |a|^(q-1) / |||a|^(q-1)||_2`, and the
//! Hessian carries the sphere curvature through a `diag(|a|^(q-2))` term.

use crate::conv::{circ_conv_raw, corr_raw};
use crate::error::{Result, SbdError};
use crate::landscape::{project_out, RiemannianDerivatives};
use crate::signal::{Kernel, NormConstraint, Signal};
use crate::util::linalg;

/// Unit normal of the `l^q` sphere at `a`: `sign(a) |a|^(q-1)`, normalized
/// in `l^2`. For `q = 2` this is `a` itself.
pub fn lq_normal_direction(a: &[f64], q: f64) -> Vec<f64> {
    let mut xi: Vec<f64> = a
        .iter()
        .map(|&v| v.signum() * v.abs().powf(q - 1.0))
        .collect();
    let n = linalg::nrm2(&xi);
    if n > 0.0 {
        linalg::scale(&mut xi, 1.0 / n);
    }
    xi
}

fn sphere_exponent(a: &Kernel) -> Result<f64> {
    match a.constraint() {
        NormConstraint::L2Sphere => Ok(2.0),
        NormConstraint::LqSphere(q) if q >= 2.0 => Ok(q),
        NormConstraint::LqSphere(q) => Err(SbdError::Unsupported(format!(
            "l^q sphere calculus needs q >= 2, got q = {q}"
        ))),
        other => Err(SbdError::Unsupported(format!(
            "l^q sphere calculus needs a sphere constraint, got {other:?}"
        ))),
    }
}

fn residual(a: &Kernel, x: &Signal, y: &Signal) -> Result<Vec<f64>> {
    if x.dims() != y.dims() {
        return Err(SbdError::DimMismatch(format!("{:?} vs {:?}", x.dims(), y.dims())));
    }
    if !a.dims().fits_in(&y.dims()) {
        return Err(SbdError::DimMismatch(format!(
            "kernel {:?} does not fit in {:?}",
            a.dims(),
            y.dims()
        )));
    }
    let mut r = vec![0.0; y.len()];
    circ_conv_raw(a.as_slice(), a.dims(), x.as_slice(), y.dims(), &mut r);
    for (ri, yi) in r.iter_mut().zip(y.as_slice()) {
        *ri -= yi;
    }
    Ok(r)
}

/// `(1/p) ||y - a (*) x||_p^p + lambda ||x||_1`.
pub fn pq_value(a: &Kernel, x: &Signal, y: &Signal, p: f64, lambda: f64) -> Result<f64> {
    if !(p >= 2.0) {
        return Err(SbdError::Unsupported(format!(
            "l^p loss calculus needs p >= 2, got p = {p}"
        )));
    }
    let r = residual(a, x, y)?;
    let fit: f64 = r.iter().map(|&v| v.abs().powf(p)).sum();
    Ok(fit / p + lambda * linalg::nrm1(x.as_slice()))
}

/// Riemannian derivatives of the fixed-activation `l^p` objective on the
/// `l^q` sphere carried by `a`'s constraint.
pub fn pq_derivatives(
    a: &Kernel,
    x: &Signal,
    y: &Signal,
    p: f64,
    lambda: f64,
) -> Result<RiemannianDerivatives> {
    if !(p >= 2.0) {
        return Err(SbdError::Unsupported(format!(
            "l^p loss calculus needs p >= 2, got p = {p}"
        )));
    }
    let q = sphere_exponent(a)?;
    let r = residual(a, x, y)?;
    let m = y.dims();
    let k = a.dims();

    let fit: f64 = r.iter().map(|&v| v.abs().powf(p)).sum();
    let value = fit / p + lambda * linalg::nrm1(x.as_slice());

    // d/dr of the fit, entrywise: sign(r) |r|^(p-1).
    let s: Vec<f64> = r
        .iter()
        .map(|&v| v.signum() * v.abs().powf(p - 1.0))
        .collect();
    let mut euclid_grad = vec![0.0; k.len()];
    corr_raw(x.as_slice(), m, &s, m, k, &mut euclid_grad);

    let xi = lq_normal_direction(a.as_slice(), q);
    let riem_grad = project_out(&euclid_grad, &xi);

    // Sphere curvature coefficient: (q-1) <sign(a)|a|^(q-1), grad> scaled
    // by the squared norm of the unnormalized normal.
    let xi_raw: Vec<f64> = a
        .as_slice()
        .iter()
        .map(|&v| v.signum() * v.abs().powf(q - 1.0))
        .collect();
    let xi_raw_sq = linalg::dot(&xi_raw, &xi_raw);
    let kappa = (q - 1.0) * linalg::dot(&xi_raw, &euclid_grad) / xi_raw_sq;
    // |a|^(q-2) entrywise; 0^0 = 1 keeps the q = 2 case exact.
    let curv_diag: Vec<f64> = a.as_slice().iter().map(|&v| v.abs().powf(q - 2.0)).collect();
    // (p-1) |r|^(p-2) entrywise, same convention at p = 2.
    let fit_diag: Vec<f64> = r.iter().map(|&v| (p - 1.0) * v.abs().powf(p - 2.0)).collect();

    let x_vec = x.as_slice().to_vec();
    let hess = move |delta: &[f64]| -> Vec<f64> {
        let t = project_out(delta, &xi);
        let mut u = vec![0.0; m.len()];
        circ_conv_raw(&t, k, &x_vec, m, &mut u);
        for (ui, w) in u.iter_mut().zip(&fit_diag) {
            *ui *= w;
        }
        let mut back = vec![0.0; k.len()];
        corr_raw(&x_vec, m, &u, m, k, &mut back);
        for ((b, d), ti) in back.iter_mut().zip(&curv_diag).zip(&t) {
            *b -= kappa * d * ti;
        }
        project_out(&back, &xi)
    };

    Ok(RiemannianDerivatives {
        value,
        euclid_grad,
        riem_grad,
        hess: Box::new(hess),
    })
}
