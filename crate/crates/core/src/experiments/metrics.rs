//! Recovery error on the signed-shift symmetry quotient.
//!
//! Estimated and reference kernels are zero-padded into a common cyclic
//! window large enough that distinct shifts never collide, then compared
//! after l1 (and l2) normalization over every shift and sign. The minimum
//! is a pseudometric: zero exactly on the signed-shift orbit.

use serde::Serialize;

use crate::error::{Result, SbdError};
use crate::signal::NormConstraint;
use crate::{Dims, Kernel};

/// Shift- and sign-invariant distance between two kernels.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KernelError {
    /// Frobenius distance of l1-normalized kernels at the best alignment.
    pub l1: f64,
    /// Frobenius distance of l2-normalized kernels at the best alignment.
    pub l2: f64,
    /// Cyclic shift achieving the l2 minimum (second component 0 in 1D).
    pub shift: (i64, i64),
    /// Sign achieving the l2 minimum (+1 or -1).
    pub sign: f64,
}

fn common_dims(a: Dims, b: Dims) -> Result<Dims> {
    match (a, b) {
        (Dims::One(ka), Dims::One(kb)) => Ok(Dims::One(ka + kb)),
        (Dims::Two(a1, a2), Dims::Two(b1, b2)) => Ok(Dims::Two(a1 + b1, a2 + b2)),
        _ => Err(SbdError::DimMismatch(
            "kernel ranks differ between estimate and reference".into(),
        )),
    }
}

fn embed(data: &[f64], from: Dims, into: Dims, scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; into.len()];
    match (from, into) {
        (Dims::One(k), Dims::One(_)) => {
            for i in 0..k {
                out[i] = scale * data[i];
            }
        }
        (Dims::Two(k1, k2), Dims::Two(_, n2)) => {
            for i in 0..k1 {
                for j in 0..k2 {
                    out[i * n2 + j] = scale * data[i * k2 + j];
                }
            }
        }
        _ => unreachable!("ranks checked by common_dims"),
    }
    out
}

fn norms(data: &[f64]) -> (f64, f64) {
    let l1 = data.iter().map(|v| v.abs()).sum::<f64>();
    let l2 = data.iter().map(|v| v * v).sum::<f64>().sqrt();
    (l1, l2)
}

/// Minimum over all cyclic shifts and signs of the distance between the
/// normalized embeddings of `a_hat` and `a0`. Signs are not searched when
/// the estimate carries a nonnegativity constraint.
pub fn kernel_error(a_hat: &Kernel, a0: &Kernel) -> Result<KernelError> {
    let (hat_l1, hat_l2) = norms(a_hat.as_slice());
    let (ref_l1, ref_l2) = norms(a0.as_slice());
    if hat_l2 == 0.0 || ref_l2 == 0.0 {
        return Err(SbdError::Degenerate("kernel error of a zero kernel".into()));
    }

    let dims = common_dims(a_hat.dims(), a0.dims())?;
    let (n1, n2) = match dims {
        Dims::One(n) => (n, 1),
        Dims::Two(a, b) => (a, b),
    };
    let hat1 = embed(a_hat.as_slice(), a_hat.dims(), dims, 1.0 / hat_l1);
    let hat2 = embed(a_hat.as_slice(), a_hat.dims(), dims, 1.0 / hat_l2);
    let ref1 = embed(a0.as_slice(), a0.dims(), dims, 1.0 / ref_l1);
    let ref2 = embed(a0.as_slice(), a0.dims(), dims, 1.0 / ref_l2);

    let signs: &[f64] = if a_hat.constraint() == NormConstraint::NonnegL2Sphere {
        &[1.0]
    } else {
        &[1.0, -1.0]
    };

    let mut best = KernelError {
        l1: f64::INFINITY,
        l2: f64::INFINITY,
        shift: (0, 0),
        sign: 1.0,
    };
    for s1 in 0..n1 {
        for s2 in 0..n2 {
            for &sign in signs {
                let mut d1 = 0.0;
                let mut d2 = 0.0;
                for i in 0..n1 {
                    for j in 0..n2 {
                        let src = ((i + n1 - s1) % n1) * n2 + (j + n2 - s2) % n2;
                        let dst = i * n2 + j;
                        let e1 = sign * hat1[src] - ref1[dst];
                        let e2 = sign * hat2[src] - ref2[dst];
                        d1 += e1 * e1;
                        d2 += e2 * e2;
                    }
                }
                let (d1, d2) = (d1.sqrt(), d2.sqrt());
                if d2 < best.l2 {
                    best.l2 = d2;
                    best.shift = (s1 as i64, s2 as i64);
                    best.sign = sign;
                }
                if d1 < best.l1 {
                    best.l1 = d1;
                }
            }
        }
    }
    Ok(best)
}
