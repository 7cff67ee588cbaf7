//! Sparsity penalties and the penalized least-squares activation solve
//!
//!     min_x  0.5 ||y - a (*) x||_2^2 + lambda r(x)
//!
//! for r either the l1 norm or its huber smoothing. The solver is FISTA
//! with a proximal step, run in monotone form: whenever the accelerated
//! step would increase the objective, momentum restarts and the step is
//! retaken as plain ISTA, so the objective never increases. Convergence is
//! declared on the stationarity gap, not iterate movement.

use serde::{Deserialize, Serialize};

use crate::conv::{circ_conv_raw, corr_raw};
use crate::error::{Result, SbdError};
use crate::signal::{Dims, Kernel, Signal};
use crate::util::linalg;

/// Entries at or below this magnitude count as "off" in sign-support
/// classification. Shared with the landscape region logic so both sides
/// agree about which region a point is in.
pub const SUPPORT_TOL: f64 = 1e-10;

/// `sign(u) * max(|u| - lambda, 0)`, elementwise.
pub fn soft_threshold(u: &[f64], lambda: f64) -> Vec<f64> {
    u.iter().map(|&v| soft_threshold_scalar(v, lambda)).collect()
}

#[inline]
pub fn soft_threshold_scalar(u: f64, lambda: f64) -> f64 {
    if u > lambda {
        u - lambda
    } else if u < -lambda {
        u + lambda
    } else {
        0.0
    }
}

/// Huber function: quadratic `x^2/(2 mu) + mu/2` inside `|x| <= mu`,
/// absolute value outside. C1, and within `n mu / 2` of the l1 norm.
pub fn huber_value(x: &[f64], mu: f64) -> f64 {
    x.iter()
        .map(|&v| {
            if v.abs() <= mu {
                v * v / (2.0 * mu) + mu / 2.0
            } else {
                v.abs()
            }
        })
        .sum()
}

pub fn huber_grad_scalar(x: f64, mu: f64) -> f64 {
    if x.abs() <= mu {
        x / mu
    } else {
        x.signum()
    }
}

/// Prox of `t * huber_mu` in closed form: shrink-to-scale inside the
/// quadratic branch, soft threshold outside.
#[inline]
fn huber_prox_scalar(u: f64, mu: f64, t: f64) -> f64 {
    if u.abs() <= mu + t {
        u * mu / (mu + t)
    } else {
        u - t * u.signum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Penalty {
    L1 { lambda: f64 },
    Huber { lambda: f64, mu: f64 },
}

impl Penalty {
    pub fn l1(lambda: f64) -> Result<Penalty> {
        if !(lambda > 0.0) {
            return Err(SbdError::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(Penalty::L1 { lambda })
    }

    pub fn huber(lambda: f64, mu: f64) -> Result<Penalty> {
        if !(lambda > 0.0) {
            return Err(SbdError::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
        }
        if !(mu > 0.0) {
            return Err(SbdError::InvalidArgument(format!("mu must be > 0, got {mu}")));
        }
        Ok(Penalty::Huber { lambda, mu })
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Penalty::L1 { lambda } | Penalty::Huber { lambda, .. } => lambda,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Penalty {
        match *self {
            Penalty::L1 { .. } => Penalty::L1 { lambda },
            Penalty::Huber { mu, .. } => Penalty::Huber { lambda, mu },
        }
    }

    /// The smoothing radius should sit well below the threshold; returns a
    /// warning message when it does not.
    pub fn advisory(&self) -> Option<String> {
        match *self {
            Penalty::Huber { lambda, mu } if mu > lambda / 10.0 => Some(format!(
                "huber smoothing mu = {mu:.3e} exceeds lambda/10 = {:.3e}; the flat region \
                 approximation degrades",
                lambda / 10.0
            )),
            _ => None,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Penalty::L1 { lambda } => lambda * linalg::nrm1(x),
            Penalty::Huber { lambda, mu } => lambda * huber_value(x, mu),
        }
    }

    /// In-place prox of `t * penalty`.
    fn prox_inplace(&self, x: &mut [f64], t: f64) {
        match *self {
            Penalty::L1 { lambda } => {
                let tl = t * lambda;
                for v in x.iter_mut() {
                    *v = soft_threshold_scalar(*v, tl);
                }
            }
            Penalty::Huber { lambda, mu } => {
                let tl = t * lambda;
                for v in x.iter_mut() {
                    *v = huber_prox_scalar(*v, mu, tl);
                }
            }
        }
    }

    /// Stationarity gap at `x` given the smooth-part gradient `g`:
    /// zero exactly at minimizers, sup-norm scaled.
    fn gap(&self, x: &[f64], g: &[f64]) -> f64 {
        match *self {
            Penalty::L1 { lambda } => x
                .iter()
                .zip(g)
                .map(|(&xi, &gi)| {
                    if xi.abs() > SUPPORT_TOL {
                        (gi + lambda * xi.signum()).abs()
                    } else {
                        (gi.abs() - lambda).max(0.0)
                    }
                })
                .fold(0.0, f64::max),
            Penalty::Huber { lambda, mu } => x
                .iter()
                .zip(g)
                .map(|(&xi, &gi)| (gi + lambda * huber_grad_scalar(xi, mu)).abs())
                .fold(0.0, f64::max),
        }
    }
}

/// Sign-support pattern of an activation: -1, 0, +1 per entry.
pub fn sign_support(x: &[f64]) -> Vec<i8> {
    x.iter()
        .map(|&v| {
            if v > SUPPORT_TOL {
                1
            } else if v < -SUPPORT_TOL {
                -1
            } else {
                0
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct InnerConfig {
    /// Stationarity-gap tolerance, relative to max(1, ||corr(a, y)||_inf).
    pub tol: f64,
    pub max_iters: usize,
    /// Record the per-iteration objective into the result (off by default;
    /// used by monotonicity checks).
    pub record_objectives: bool,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig { tol: 1e-9, max_iters: 20_000, record_objectives: false }
    }
}

impl InnerConfig {
    pub fn with_tol(tol: f64) -> Self {
        InnerConfig { tol, ..Default::default() }
    }
}

#[derive(Clone, Debug)]
pub struct ActivationSolve {
    pub x_star: Signal,
    pub sign_support: Vec<i8>,
    pub iterations: usize,
    /// Final stationarity gap (absolute).
    pub residual_norm: f64,
    /// Objective per iteration, when requested.
    pub objectives: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MultiActivationSolve {
    pub x_stars: Vec<Signal>,
    pub sign_supports: Vec<Vec<i8>>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub objectives: Vec<f64>,
}

struct Workspace {
    m: Dims,
    conv: Vec<f64>,
    resid: Vec<f64>,
    grad: Vec<f64>,
}

impl Workspace {
    fn new(m: Dims) -> Workspace {
        let n = m.len();
        Workspace { m, conv: vec![0.0; n], resid: vec![0.0; n], grad: vec![0.0; n] }
    }

    /// residual = sum_n conv(a_n, x_n) - y; returns 0.5 ||residual||^2.
    fn residual(&mut self, kernels: &[&Kernel], xs: &[&[f64]], y: &[f64]) -> f64 {
        self.resid.copy_from_slice(y);
        linalg::scale(&mut self.resid, -1.0);
        for (a, x) in kernels.iter().zip(xs) {
            circ_conv_raw(a.as_slice(), a.dims(), x, self.m, &mut self.conv);
            linalg::axpy(&mut self.resid, 1.0, &self.conv);
        }
        0.5 * linalg::dot(&self.resid, &self.resid)
    }
}

fn lipschitz_bound(kernels: &[&Kernel]) -> f64 {
    let s: f64 = kernels.iter().map(|a| linalg::nrm1(a.as_slice())).sum();
    (s * s).max(f64::MIN_POSITIVE)
}

/// Joint FISTA over all activation blocks. Single-kernel solves call this
/// with one block; the code path is identical.
fn solve_blocks(
    kernels: &[&Kernel],
    y: &Signal,
    penalty: &Penalty,
    cfg: &InnerConfig,
    warm: Option<&[&[f64]]>,
) -> Result<(Vec<Vec<f64>>, usize, f64, Vec<f64>)> {
    if kernels.is_empty() {
        return Err(SbdError::InvalidArgument("no kernels".into()));
    }
    let m = y.dims();
    for a in kernels {
        if !a.dims().fits_in(&m) {
            return Err(SbdError::DimMismatch(format!(
                "kernel {:?} does not fit in {:?}",
                a.dims(),
                m
            )));
        }
    }
    let n_blocks = kernels.len();
    let mlen = m.len();

    let mut x: Vec<Vec<f64>> = match warm {
        Some(ws) => {
            if ws.len() != n_blocks || ws.iter().any(|w| w.len() != mlen) {
                return Err(SbdError::DimMismatch("warm start shape".into()));
            }
            ws.iter().map(|w| w.to_vec()).collect()
        }
        None => vec![vec![0.0; mlen]; n_blocks],
    };
    let mut z = x.clone();
    let mut x_prev = x.clone();

    let step = 1.0 / lipschitz_bound(kernels);
    let mut ws = Workspace::new(m);

    // Convergence scale: the gradient magnitude at x = 0.
    let scale = {
        let mut c = vec![0.0; mlen];
        let mut s: f64 = 1.0;
        for a in kernels {
            corr_raw(a.as_slice(), a.dims(), y.as_slice(), m, m, &mut c);
            s = s.max(linalg::nrm_inf(&c));
        }
        s
    };
    let tol_abs = cfg.tol * scale;

    let objective = |ws: &mut Workspace, xs: &[Vec<f64>]| -> f64 {
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let fit = ws.residual(kernels, &refs, y.as_slice());
        fit + xs.iter().map(|v| penalty.value(v)).sum::<f64>()
    };

    let mut f_cur = objective(&mut ws, &x);
    let mut tk: f64 = 1.0;
    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    let mut objectives = Vec::new();
    if cfg.record_objectives {
        objectives.push(f_cur);
    }

    // One prox-gradient step from `from`, result written into `into`.
    // Leaves the residual at `from` in ws.resid.
    let prox_step = |ws: &mut Workspace, from: &[Vec<f64>], into: &mut [Vec<f64>]| {
        let refs: Vec<&[f64]> = from.iter().map(|v| v.as_slice()).collect();
        ws.residual(kernels, &refs, y.as_slice());
        for (b, a) in kernels.iter().enumerate() {
            corr_raw(a.as_slice(), a.dims(), &ws.resid, m, m, &mut ws.grad);
            into[b].copy_from_slice(&from[b]);
            linalg::axpy(&mut into[b], -step, &ws.grad);
            penalty.prox_inplace(&mut into[b], step);
        }
    };

    let gap_at = |ws: &mut Workspace, xs: &[Vec<f64>]| -> f64 {
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        ws.residual(kernels, &refs, y.as_slice());
        let mut g = 0.0_f64;
        for (b, a) in kernels.iter().enumerate() {
            corr_raw(a.as_slice(), a.dims(), &ws.resid, m, m, &mut ws.grad);
            g = g.max(penalty.gap(&xs[b], &ws.grad));
        }
        g
    };

    let mut x_next = x.clone();
    let check_every = 5;
    while iterations < cfg.max_iters {
        iterations += 1;
        prox_step(&mut ws, &z, &mut x_next);
        let mut f_next = objective(&mut ws, &x_next);
        if f_next > f_cur {
            // Accelerated step overshot: restart momentum, retake as ISTA.
            // With step = 1/L the descent lemma guarantees f_next <= f_cur.
            tk = 1.0;
            prox_step(&mut ws, &x, &mut x_next);
            f_next = objective(&mut ws, &x_next);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        let beta = (tk - 1.0) / t_next;
        for b in 0..n_blocks {
            for i in 0..mlen {
                z[b][i] = x_next[b][i] + beta * (x_next[b][i] - x[b][i]);
            }
        }
        tk = t_next;
        std::mem::swap(&mut x_prev, &mut x);
        std::mem::swap(&mut x, &mut x_next);
        f_cur = f_next;
        if cfg.record_objectives {
            objectives.push(f_cur);
        }

        if iterations % check_every == 0 || iterations == cfg.max_iters {
            gap = gap_at(&mut ws, &x);
            if gap <= tol_abs {
                return Ok((x, iterations, gap, objectives));
            }
        }
    }
    // Report the best iterate through the error so callers can proceed.
    let x_stars: Vec<Signal> = x
        .iter()
        .map(|v| Signal::new(v.clone(), m).expect("iterate stays finite"))
        .collect();
    let best = ActivationSolve {
        sign_support: sign_support(x_stars[0].as_slice()),
        x_star: x_stars.into_iter().next().unwrap(),
        iterations,
        residual_norm: gap,
        objectives,
    };
    Err(SbdError::InnerNoConvergence {
        iterations,
        gap,
        tol: tol_abs,
        best: Box::new(best),
    })
}

/// Penalized least-squares activation for a single kernel.
pub fn solve_activation(
    a: &Kernel,
    y: &Signal,
    penalty: &Penalty,
    cfg: &InnerConfig,
    warm: Option<&Signal>,
) -> Result<ActivationSolve> {
    let warm_refs: Option<Vec<&[f64]>> = warm.map(|w| vec![w.as_slice()]);
    let (mut xs, iterations, gap, objectives) =
        solve_blocks(&[a], y, penalty, cfg, warm_refs.as_deref())?;
    let x = xs.pop().unwrap();
    let support = sign_support(&x);
    Ok(ActivationSolve {
        x_star: Signal::new(x, y.dims())?,
        sign_support: support,
        iterations,
        residual_norm: gap,
        objectives,
    })
}

/// Joint activation solve for a sum-of-convolutions model.
pub fn solve_activation_multi(
    kernels: &[Kernel],
    y: &Signal,
    penalty: &Penalty,
    cfg: &InnerConfig,
    warm: Option<&[Signal]>,
) -> Result<MultiActivationSolve> {
    let refs: Vec<&Kernel> = kernels.iter().collect();
    let warm_refs: Option<Vec<&[f64]>> =
        warm.map(|w| w.iter().map(|s| s.as_slice()).collect());
    let (xs, iterations, gap, objectives) =
        solve_blocks(&refs, y, penalty, cfg, warm_refs.as_deref())?;
    let sign_supports = xs.iter().map(|x| sign_support(x)).collect();
    let x_stars = xs
        .into_iter()
        .map(|x| Signal::new(x, y.dims()))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiActivationSolve { x_stars, sign_supports, iterations, residual_norm: gap, objectives })
}

/// Joint objective value 0.5 ||y - a (*) x||^2 + penalty(x).
pub fn joint_objective(a: &Kernel, x: &Signal, y: &Signal, penalty: &Penalty) -> Result<f64> {
    let conv = crate::conv::circ_conv(a, x)?;
    if conv.dims() != y.dims() {
        return Err(SbdError::DimMismatch("x vs y".into()));
    }
    let fit: f64 = conv
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(c, yy)| (c - yy) * (c - yy))
        .sum();
    Ok(0.5 * fit + penalty.value(x.as_slice()))
}
