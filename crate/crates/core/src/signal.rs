//! Dense signals, short kernels, and the cyclic index algebra they share.
//!
//! Everything is real-valued, row-major, and indexed cyclically. A signal
//! lives on the full torus (length m, or m1 x m2); a kernel occupies the
//! leading window (length k <= m) and is embedded by zero padding. The
//! embedding `inject` and the window restriction `project` are adjoint.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SbdError};
use crate::util::linalg;

/// Feasibility tolerance for norm constraints. Constructors reject kernels
/// further than this from their constraint set; mutators renormalize.
pub const SPHERE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dims {
    One(usize),
    Two(usize, usize),
}

impl Dims {
    pub fn len(&self) -> usize {
        match *self {
            Dims::One(n) => n,
            Dims::Two(n1, n2) => n1 * n2,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rank(&self) -> usize {
        match self {
            Dims::One(_) => 1,
            Dims::Two(_, _) => 2,
        }
    }

    /// True when `self` fits inside `outer` axis by axis (same rank).
    pub fn fits_in(&self, outer: &Dims) -> bool {
        match (*self, *outer) {
            (Dims::One(k), Dims::One(m)) => k <= m,
            (Dims::Two(k1, k2), Dims::Two(m1, m2)) => k1 <= m1 && k2 <= m2,
            _ => false,
        }
    }
}

/// Cyclic shift amount; rank must match the operand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shift {
    One(i64),
    Two(i64, i64),
}

impl Shift {
    pub fn rank(&self) -> usize {
        match self {
            Shift::One(_) => 1,
            Shift::Two(_, _) => 2,
        }
    }

    pub fn as_pair(&self) -> (i64, i64) {
        match *self {
            Shift::One(t) => (t, 0),
            Shift::Two(t1, t2) => (t1, t2),
        }
    }

    pub fn negate(&self) -> Shift {
        match *self {
            Shift::One(t) => Shift::One(-t),
            Shift::Two(t1, t2) => Shift::Two(-t1, -t2),
        }
    }
}

#[inline]
pub(crate) fn wrap(i: i64, m: usize) -> usize {
    i.rem_euclid(m as i64) as usize
}

fn check_finite(data: &[f64], what: &str) -> Result<()> {
    if data.iter().any(|x| !x.is_finite()) {
        return Err(SbdError::NonFinite(what.to_string()));
    }
    Ok(())
}

/// Real array on the cyclic grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    data: Vec<f64>,
    dims: Dims,
}

impl Signal {
    pub fn new(data: Vec<f64>, dims: Dims) -> Result<Signal> {
        if dims.is_empty() || data.len() != dims.len() {
            return Err(SbdError::DimMismatch(format!(
                "signal data length {} vs dims {:?}",
                data.len(),
                dims
            )));
        }
        check_finite(&data, "signal")?;
        Ok(Signal { data, dims })
    }

    pub fn zeros(dims: Dims) -> Signal {
        Signal { data: vec![0.0; dims.len()], dims }
    }

    pub fn from_1d(data: Vec<f64>) -> Result<Signal> {
        let n = data.len();
        Signal::new(data, Dims::One(n))
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn norm2(&self) -> f64 {
        linalg::nrm2(&self.data)
    }

    pub fn norm1(&self) -> f64 {
        linalg::nrm1(&self.data)
    }

    pub fn norm_inf(&self) -> f64 {
        linalg::nrm_inf(&self.data)
    }
}

/// Constraint set a kernel's coefficients live on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NormConstraint {
    /// Unit l2 sphere.
    L2Sphere,
    /// Unit lq sphere, q >= 2.
    LqSphere(f64),
    /// Nonnegative orthant intersected with the unit l2 sphere.
    NonnegL2Sphere,
    /// Unconstrained.
    None,
}

impl NormConstraint {
    fn check(&self, data: &[f64]) -> Result<()> {
        match *self {
            NormConstraint::L2Sphere => {
                let n = linalg::nrm2(data);
                if (n - 1.0).abs() > SPHERE_TOL {
                    return Err(SbdError::InvalidArgument(format!(
                        "kernel l2 norm {n} is off the unit sphere"
                    )));
                }
            }
            NormConstraint::LqSphere(q) => {
                if !(q >= 2.0) {
                    return Err(SbdError::Unsupported(format!(
                        "lq sphere requires q >= 2, got {q}"
                    )));
                }
                let n = linalg::nrm_q(data, q);
                if (n - 1.0).abs() > SPHERE_TOL {
                    return Err(SbdError::InvalidArgument(format!(
                        "kernel l{q} norm {n} is off the unit sphere"
                    )));
                }
            }
            NormConstraint::NonnegL2Sphere => {
                if data.iter().any(|&x| x < 0.0) {
                    return Err(SbdError::InvalidArgument(
                        "kernel has negative entries under a nonnegative constraint".into(),
                    ));
                }
                let n = linalg::nrm2(data);
                if (n - 1.0).abs() > SPHERE_TOL {
                    return Err(SbdError::InvalidArgument(format!(
                        "kernel l2 norm {n} is off the unit sphere"
                    )));
                }
            }
            NormConstraint::None => {}
        }
        Ok(())
    }

    /// Nearest feasible point (metric projection); `None` leaves data as-is.
    /// Errors when the projection is undefined (zero vector onto a sphere).
    fn project(&self, data: &mut [f64]) -> Result<()> {
        match *self {
            NormConstraint::L2Sphere => {
                if linalg::normalize_l2(data) == 0.0 {
                    return Err(SbdError::Degenerate("cannot project zero onto the sphere".into()));
                }
            }
            NormConstraint::LqSphere(q) => {
                let n = linalg::nrm_q(data, q);
                if n == 0.0 {
                    return Err(SbdError::Degenerate("cannot project zero onto the sphere".into()));
                }
                linalg::scale(data, 1.0 / n);
            }
            NormConstraint::NonnegL2Sphere => {
                for x in data.iter_mut() {
                    if *x < 0.0 {
                        *x = 0.0;
                    }
                }
                if linalg::normalize_l2(data) == 0.0 {
                    return Err(SbdError::Degenerate(
                        "projection onto the nonnegative sphere vanished".into(),
                    ));
                }
            }
            NormConstraint::None => {}
        }
        Ok(())
    }
}

/// Short convolutional kernel on the leading window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    data: Vec<f64>,
    dims: Dims,
    constraint: NormConstraint,
}

impl Kernel {
    /// Validates the constraint exactly (within [`SPHERE_TOL`]).
    pub fn new(data: Vec<f64>, dims: Dims, constraint: NormConstraint) -> Result<Kernel> {
        if dims.is_empty() || data.len() != dims.len() {
            return Err(SbdError::DimMismatch(format!(
                "kernel data length {} vs dims {:?}",
                data.len(),
                dims
            )));
        }
        check_finite(&data, "kernel")?;
        constraint.check(&data)?;
        Ok(Kernel { data, dims, constraint })
    }

    /// Projects onto the constraint set, then constructs.
    pub fn project_new(
        mut data: Vec<f64>,
        dims: Dims,
        constraint: NormConstraint,
    ) -> Result<Kernel> {
        if dims.is_empty() || data.len() != dims.len() {
            return Err(SbdError::DimMismatch(format!(
                "kernel data length {} vs dims {:?}",
                data.len(),
                dims
            )));
        }
        check_finite(&data, "kernel")?;
        constraint.project(&mut data)?;
        Ok(Kernel { data, dims, constraint })
    }

    /// l2-normalized 1D kernel.
    pub fn on_sphere_1d(data: Vec<f64>) -> Result<Kernel> {
        let k = data.len();
        Kernel::project_new(data, Dims::One(k), NormConstraint::L2Sphere)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn constraint(&self) -> NormConstraint {
        self.constraint
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// In-place feasibility restoration after arithmetic on the raw data.
    pub fn renormalize(&mut self) -> Result<()> {
        self.constraint.project(&mut self.data)
    }

    /// Replaces the coefficients and re-projects onto the constraint set.
    pub fn set_data(&mut self, data: Vec<f64>) -> Result<()> {
        if data.len() != self.dims.len() {
            return Err(SbdError::DimMismatch(format!(
                "kernel data length {} vs dims {:?}",
                data.len(),
                self.dims
            )));
        }
        check_finite(&data, "kernel")?;
        self.data = data;
        self.renormalize()
    }
}

/// `out[i] = v[(i - tau) mod m]`, per axis in 2D.
pub fn cyclic_shift(v: &Signal, tau: Shift) -> Result<Signal> {
    if v.dims().rank() != tau.rank() {
        return Err(SbdError::DimMismatch(format!(
            "shift rank {} vs signal rank {}",
            tau.rank(),
            v.dims().rank()
        )));
    }
    let mut out = vec![0.0; v.len()];
    cyclic_shift_raw(v.as_slice(), v.dims(), tau, &mut out);
    Signal::new(out, v.dims())
}

pub(crate) fn cyclic_shift_raw(v: &[f64], dims: Dims, tau: Shift, out: &mut [f64]) {
    let (t1, t2) = tau.as_pair();
    match dims {
        Dims::One(m) => {
            for (i, o) in out.iter_mut().enumerate() {
                *o = v[wrap(i as i64 - t1, m)];
            }
        }
        Dims::Two(m1, m2) => {
            for i1 in 0..m1 {
                let s1 = wrap(i1 as i64 - t1, m1);
                for i2 in 0..m2 {
                    let s2 = wrap(i2 as i64 - t2, m2);
                    out[i1 * m2 + i2] = v[s1 * m2 + s2];
                }
            }
        }
    }
}

/// Zero-padded embedding of the kernel window into the torus of size `m`.
pub fn inject(a: &Kernel, m: Dims) -> Result<Signal> {
    if !a.dims().fits_in(&m) {
        return Err(SbdError::DimMismatch(format!(
            "kernel {:?} does not fit in {:?}",
            a.dims(),
            m
        )));
    }
    let mut out = vec![0.0; m.len()];
    inject_raw(a.as_slice(), a.dims(), m, &mut out);
    Signal::new(out, m)
}

pub(crate) fn inject_raw(a: &[f64], ka: Dims, m: Dims, out: &mut [f64]) {
    out.fill(0.0);
    match (ka, m) {
        (Dims::One(k), Dims::One(_)) => out[..k].copy_from_slice(&a[..k]),
        (Dims::Two(k1, k2), Dims::Two(_, m2)) => {
            for j1 in 0..k1 {
                out[j1 * m2..j1 * m2 + k2].copy_from_slice(&a[j1 * k2..(j1 + 1) * k2]);
            }
        }
        _ => unreachable!("rank checked by caller"),
    }
}

/// Adjoint of [`inject`]: restriction to the leading window of size `k`.
pub fn project(y: &Signal, k: Dims) -> Result<Vec<f64>> {
    if !k.fits_in(&y.dims()) {
        return Err(SbdError::DimMismatch(format!(
            "window {:?} does not fit in {:?}",
            k,
            y.dims()
        )));
    }
    let mut out = vec![0.0; k.len()];
    project_raw(y.as_slice(), y.dims(), k, &mut out);
    Ok(out)
}

pub(crate) fn project_raw(y: &[f64], m: Dims, k: Dims, out: &mut [f64]) {
    match (m, k) {
        (Dims::One(_), Dims::One(kk)) => out[..kk].copy_from_slice(&y[..kk]),
        (Dims::Two(_, m2), Dims::Two(k1, k2)) => {
            for j1 in 0..k1 {
                out[j1 * k2..(j1 + 1) * k2].copy_from_slice(&y[j1 * m2..j1 * m2 + k2]);
            }
        }
        _ => unreachable!("rank checked by caller"),
    }
}

/// Leading window of the shifted embedding, re-projected onto the kernel's
/// constraint set. These are exactly the competing kernels a short window
/// can see of a shifted ground truth; a window that captures none of the
/// support is an error rather than a zero kernel.
pub fn shift_truncation(a0: &Kernel, tau: Shift, m: Dims) -> Result<Kernel> {
    if !a0.dims().fits_in(&m) {
        return Err(SbdError::DimMismatch(format!(
            "kernel {:?} does not fit in {:?}",
            a0.dims(),
            m
        )));
    }
    if tau.rank() != a0.dims().rank() {
        return Err(SbdError::DimMismatch("shift rank vs kernel rank".into()));
    }
    let embedded = inject(a0, m)?;
    let shifted = cyclic_shift(&embedded, tau)?;
    let window = project(&shifted, a0.dims())?;
    if window.iter().all(|&x| x == 0.0) {
        return Err(SbdError::ZeroTruncation { tau: tau.as_pair() });
    }
    Kernel::project_new(window, a0.dims(), a0.constraint())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_examples() {
        let v = Signal::from_1d(vec![1.0, 2.0, 3.0]).unwrap();
        let s = cyclic_shift(&v, Shift::One(1)).unwrap();
        assert_eq!(s.as_slice(), &[3.0, 1.0, 2.0]);
        let s = cyclic_shift(&v, Shift::One(-1)).unwrap();
        assert_eq!(s.as_slice(), &[2.0, 3.0, 1.0]);
        // Shift by m is the identity.
        let s = cyclic_shift(&v, Shift::One(3)).unwrap();
        assert_eq!(s.as_slice(), v.as_slice());
    }

    #[test]
    fn shift_composes_additively() {
        let v = Signal::from_1d(vec![0.5, -1.0, 2.0, 4.0, -3.0]).unwrap();
        let a = cyclic_shift(&cyclic_shift(&v, Shift::One(2)).unwrap(), Shift::One(-4)).unwrap();
        let b = cyclic_shift(&v, Shift::One(-2)).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn inject_project_adjoint_window() {
        let a = Kernel::new(
            vec![0.6, 0.8],
            Dims::One(2),
            NormConstraint::L2Sphere,
        )
        .unwrap();
        let e = inject(&a, Dims::One(5)).unwrap();
        assert_eq!(e.as_slice(), &[0.6, 0.8, 0.0, 0.0, 0.0]);
        let back = project(&e, Dims::One(2)).unwrap();
        assert_eq!(back, vec![0.6, 0.8]);
    }

    #[test]
    fn inject_project_2d() {
        let a = Kernel::new(
            vec![1.0, 2.0, 3.0, 4.0],
            Dims::Two(2, 2),
            NormConstraint::None,
        )
        .unwrap();
        let e = inject(&a, Dims::Two(3, 4)).unwrap();
        assert_eq!(
            e.as_slice(),
            &[1.0, 2.0, 0.0, 0.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(project(&e, Dims::Two(2, 2)).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn sphere_constraint_enforced() {
        assert!(Kernel::new(vec![1.0, 1.0], Dims::One(2), NormConstraint::L2Sphere).is_err());
        let k = Kernel::on_sphere_1d(vec![1.0, 1.0]).unwrap();
        let r = 1.0 / 2.0_f64.sqrt();
        assert!((k.as_slice()[0] - r).abs() < 1e-15);
        assert!(Kernel::on_sphere_1d(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn truncation_examples() {
        // tau = 0 returns the kernel itself.
        let a0 = Kernel::on_sphere_1d(vec![1.0, 8.0, 2.0]).unwrap();
        let t0 = shift_truncation(&a0, Shift::One(0), Dims::One(256)).unwrap();
        for (x, y) in t0.as_slice().iter().zip(a0.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
        // Forward shift drops the tail, backward shift drops the head.
        let t1 = shift_truncation(&a0, Shift::One(1), Dims::One(8)).unwrap();
        let n1 = (1.0_f64 + 64.0).sqrt();
        for (x, y) in t1.as_slice().iter().zip([0.0, 1.0 / n1, 8.0 / n1]) {
            assert!((x - y).abs() < 1e-15, "{:?}", t1.as_slice());
        }
        let tm1 = shift_truncation(&a0, Shift::One(-1), Dims::One(8)).unwrap();
        let nm1 = (64.0_f64 + 4.0).sqrt();
        for (x, y) in tm1.as_slice().iter().zip([8.0 / nm1, 2.0 / nm1, 0.0]) {
            assert!((x - y).abs() < 1e-15, "{:?}", tm1.as_slice());
        }
    }

    #[test]
    fn truncation_zero_window_is_error() {
        let a0 = Kernel::on_sphere_1d(vec![1.0, 8.0, 2.0]).unwrap();
        match shift_truncation(&a0, Shift::One(4), Dims::One(8)) {
            Err(SbdError::ZeroTruncation { tau }) => assert_eq!(tau, (4, 0)),
            other => panic!("expected zero-truncation error, got {other:?}"),
        }
    }
}
