//! Two-stage blind deconvolution solver.
//!
//! Stage I minimizes the huber-smoothed marginal objective on the short
//! kernel sphere from a random start; minimizers there sit near signed
//! shift truncations of the ground truth. Stage II zero-pads the stage I
//! kernel into a longer centered window, so the truncated tail has room to
//! complete, and follows the continuation ladder lambda0, lambda0/beta, ...
//! down to lambda_min, warm-starting every rung from the previous one. An
//! alternating (a, x) block-descent variant shares the same skeleton and
//! the same fixed points.
//!
//! A solve is single-threaded and fully determined by its seed.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SbdError};
use crate::experiments::{kernel_error, KernelError};
use crate::landscape::{lambda_upper_bound, phi, phi_gradient, project_out, psi};
use crate::prox::{solve_activation, ActivationSolve, InnerConfig, Penalty};
use crate::signal::NormConstraint;
use crate::util::linalg::{axpy, dot, nrm2, scale};
use crate::util::rng::{gaussian_vec, rng_from, substream, substream_indexed, unit_sphere_vec};
use crate::{conv, Dims, Kernel, Signal};

/// Smallest step the line search is allowed to try before giving up.
const MIN_STEP: f64 = 1e-14;
/// Iterations without objective decrease before a tangent perturbation.
const STALL_LIMIT: usize = 50;
/// Norm of the tangent perturbation applied on a stall.
const STALL_NOISE: f64 = 1e-6;
/// Proximal-gradient iterations per x-block of the alternating variant.
const X_BLOCK_ITERS: usize = 10;

/// How the kernel step size is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepPolicy {
    /// Unconditional projected gradient step of the given size.
    FixedStep(f64),
    /// Backtracking with the sufficient-decrease test
    /// `f(R(a - s g)) <= f(a) - c s ||g||^2`, shrinking `s` geometrically.
    BacktrackingArmijo { c: f64, shrink: f64 },
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::BacktrackingArmijo { c: 1e-4, shrink: 0.5 }
    }
}

/// Parameters of the two-stage solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// First (largest) penalty weight of the ladder.
    pub lambda0: f64,
    /// The ladder stops at the last rung still at or above this weight.
    pub lambda_min: f64,
    /// Geometric ladder ratio, > 1.
    pub beta: f64,
    /// Huber smoothing radius; must stay below every rung.
    pub mu: f64,
    /// Kernel window searched in stage I.
    pub k: Dims,
    /// Lifted window used in stage II; at least 2k-1 per axis.
    pub k_lift: Dims,
    /// Gradient-step budget per fixed-lambda solve.
    pub max_outer_iters: usize,
    /// Iteration budget per activation solve.
    pub max_inner_iters: usize,
    /// Riemannian gradient norm that counts as stationary.
    pub grad_tol: f64,
    pub step_policy: StepPolicy,
    pub seed: u64,
}

impl SolverConfig {
    /// Defaults derived from the observation: lambda0 at half the
    /// flat-region bound, a beta = 2 ladder down to 1e-4 (relative ladder
    /// when the bound itself is tiny), smoothing one decade below the floor.
    pub fn for_observation(y: &Signal, k: Dims, seed: u64) -> Result<SolverConfig> {
        let bound = lambda_upper_bound(y, k)?;
        if !(bound > 0.0) {
            return Err(SbdError::Degenerate("observation is identically zero".into()));
        }
        let lambda0 = 0.5 * bound;
        let lambda_min = 1e-4_f64.min(lambda0 / 16.0);
        let cfg = SolverConfig {
            lambda0,
            lambda_min,
            beta: 2.0,
            mu: lambda_min / 10.0,
            k,
            k_lift: lifted_dims(k),
            max_outer_iters: 500,
            max_inner_iters: 20_000,
            grad_tol: 1e-6,
            step_policy: StepPolicy::default(),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0 && self.lambda_min > 0.0) {
            return Err(SbdError::InvalidArgument("lambda0 and lambda_min must be positive".into()));
        }
        if self.lambda_min >= self.lambda0 {
            return Err(SbdError::InvalidArgument(format!(
                "lambda_min {} must lie below lambda0 {}",
                self.lambda_min, self.lambda0
            )));
        }
        if !(self.beta > 1.0) {
            return Err(SbdError::InvalidArgument(format!("beta must exceed 1, got {}", self.beta)));
        }
        if !(self.mu > 0.0 && self.mu < self.lambda_min) {
            return Err(SbdError::InvalidArgument(format!(
                "smoothing mu {} must lie in (0, lambda_min = {})",
                self.mu, self.lambda_min
            )));
        }
        if !(self.grad_tol > 0.0) {
            return Err(SbdError::InvalidArgument("grad_tol must be positive".into()));
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(SbdError::InvalidArgument("iteration budgets must be positive".into()));
        }
        if let StepPolicy::BacktrackingArmijo { c, shrink } = self.step_policy {
            if !(c > 0.0 && c < 1.0 && shrink > 0.0 && shrink < 1.0) {
                return Err(SbdError::InvalidArgument(
                    "backtracking needs 0 < c < 1 and 0 < shrink < 1".into(),
                ));
            }
        } else if let StepPolicy::FixedStep(s) = self.step_policy {
            if !(s > 0.0) {
                return Err(SbdError::InvalidArgument("fixed step must be positive".into()));
            }
        }
        let (k1, k2) = axes(self.k);
        let (p1, p2) = axes(self.k_lift);
        let ok_rank = matches!(self.k, Dims::One(_)) == matches!(self.k_lift, Dims::One(_));
        if !ok_rank {
            return Err(SbdError::DimMismatch("k and k_lift ranks differ".into()));
        }
        if k1 == 0 || k2 == 0 {
            return Err(SbdError::InvalidArgument("empty kernel window".into()));
        }
        // The lift must be able to complete any truncated shift: 2k-1 per axis.
        if p1 < 2 * k1 - 1 || p2 < 2 * k2 - 1 {
            return Err(SbdError::InvalidArgument(format!(
                "lifted window {:?} is smaller than 2k-1 for k = {:?}",
                self.k_lift, self.k
            )));
        }
        Ok(())
    }
}

/// One outer iteration of a fixed-lambda solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1 or 2 inside the two-stage pipeline, 0 for standalone solves.
    pub stage: u8,
    pub lambda: f64,
    pub a: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub inner_iterations: usize,
}

/// Full iterate history of a solve, segmented by fixed-lambda runs.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    /// Indices into `records` where a new fixed-lambda segment starts.
    pub boundaries: Vec<usize>,
    pub warnings: Vec<String>,
}

impl SolveTrace {
    pub(crate) fn open_segment(&mut self) {
        self.boundaries.push(self.records.len());
    }

    /// Per-segment slices, one fixed-lambda solve each, in run order.
    pub fn segments(&self) -> Vec<&[TraceRecord]> {
        let mut out = Vec::new();
        for (i, &start) in self.boundaries.iter().enumerate() {
            let end = self.boundaries.get(i + 1).copied().unwrap_or(self.records.len());
            if start < end {
                out.push(&self.records[start..end]);
            }
        }
        out
    }
}

/// Output of the two-stage pipeline.
#[derive(Clone, Debug)]
pub struct RecoveryResult {
    /// Final kernel on the lifted sphere.
    pub a_hat: Kernel,
    /// Highest-energy cyclic window of `a_hat` at the original length,
    /// renormalized.
    pub a_aligned: Kernel,
    /// Activation at the final kernel and smallest lambda.
    pub x_hat: Signal,
    pub trace: SolveTrace,
    /// Shift/sign-invariant distance to ground truth, when attached.
    pub error_metrics: Option<KernelError>,
}

impl RecoveryResult {
    /// Fill `error_metrics` against a known ground truth.
    pub fn attach_metrics(&mut self, a0: &Kernel) -> Result<()> {
        self.error_metrics = Some(kernel_error(&self.a_hat, a0)?);
        Ok(())
    }
}

fn axes(d: Dims) -> (usize, usize) {
    match d {
        Dims::One(n) => (n, 1),
        Dims::Two(n1, n2) => (n1, n2),
    }
}

/// Default lift: three kernel lengths per axis, leaving a full kernel of
/// margin on each side of the centered copy.
pub fn lifted_dims(k: Dims) -> Dims {
    match k {
        Dims::One(n) => Dims::One(3 * n),
        Dims::Two(n1, n2) => Dims::Two(3 * n1, 3 * n2),
    }
}

/// Centered zero-padded copy of `a` in the larger window, renormalized.
pub fn lift_centered(a: &Kernel, k_lift: Dims) -> Result<Kernel> {
    let (k1, k2) = axes(a.dims());
    let (p1, p2) = axes(k_lift);
    if matches!(a.dims(), Dims::One(_)) != matches!(k_lift, Dims::One(_)) {
        return Err(SbdError::DimMismatch("lift rank differs from kernel rank".into()));
    }
    if p1 < k1 || p2 < k2 {
        return Err(SbdError::InvalidArgument("lift window smaller than kernel".into()));
    }
    let (o1, o2) = ((p1 - k1) / 2, (p2 - k2) / 2);
    let mut data = vec![0.0; p1 * p2];
    for i in 0..k1 {
        for j in 0..k2 {
            data[(o1 + i) * p2 + (o2 + j)] = a.as_slice()[i * k2 + j];
        }
    }
    Kernel::project_new(data, k_lift, a.constraint())
}

/// Highest-energy cyclic window of `a` at length `k`, renormalized.
pub fn best_window(a: &Kernel, k: Dims) -> Result<Kernel> {
    let (n1, n2) = axes(a.dims());
    let (k1, k2) = axes(k);
    if matches!(a.dims(), Dims::One(_)) != matches!(k, Dims::One(_)) {
        return Err(SbdError::DimMismatch("window rank differs from kernel rank".into()));
    }
    if k1 > n1 || k2 > n2 {
        return Err(SbdError::InvalidArgument("window larger than kernel".into()));
    }
    let v = a.as_slice();
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    for s1 in 0..n1 {
        for s2 in 0..n2 {
            let mut e = 0.0;
            for i in 0..k1 {
                for j in 0..k2 {
                    let w = v[((s1 + i) % n1) * n2 + (s2 + j) % n2];
                    e += w * w;
                }
            }
            if e > best.0 {
                best = (e, s1, s2);
            }
        }
    }
    let (_, s1, s2) = best;
    let mut data = Vec::with_capacity(k1 * k2);
    for i in 0..k1 {
        for j in 0..k2 {
            data.push(v[((s1 + i) % n1) * n2 + (s2 + j) % n2]);
        }
    }
    Kernel::project_new(data, k, a.constraint())
}

pub(crate) fn inner_cfg(cfg: &SolverConfig) -> InnerConfig {
    InnerConfig {
        tol: (cfg.grad_tol * 1e-2).clamp(1e-13, 1e-9),
        max_iters: cfg.max_inner_iters,
        record_objectives: false,
    }
}

fn retract_step(a: &Kernel, dir: &[f64], s: f64) -> Result<Kernel> {
    let mut data = a.as_slice().to_vec();
    axpy(&mut data, -s, dir);
    Kernel::project_new(data, a.dims(), a.constraint())
}

struct DescentOutcome {
    a: Kernel,
    solve: ActivationSolve,
}

/// Riemannian descent on the marginal objective at one penalty weight.
/// Appends one trace record per outer iteration under the given stage tag.
fn descend_fixed_lambda(
    y: &Signal,
    mut a: Kernel,
    penalty: &Penalty,
    cfg: &SolverConfig,
    stage: u8,
    trace: &mut SolveTrace,
    warm0: Option<Signal>,
) -> Result<DescentOutcome> {
    let icfg = inner_cfg(cfg);
    let lambda = penalty.lambda();
    trace.open_segment();

    let mut warm = warm0;
    let mut step0 = 1.0_f64;
    let mut stalled = 0usize;
    let mut last_value = f64::INFINITY;
    let mut last_grad = f64::INFINITY;

    for iter in 0..cfg.max_outer_iters {
        let g = phi_gradient(&a, y, penalty, &icfg, warm.as_ref())?;
        let grad_norm = nrm2(&g.riem_grad);
        last_grad = grad_norm;
        trace.records.push(TraceRecord {
            stage,
            lambda,
            a: a.as_slice().to_vec(),
            value: g.value,
            grad_norm,
            inner_iterations: g.x_star.iterations,
        });
        if grad_norm <= cfg.grad_tol {
            return Ok(DescentOutcome { a, solve: g.x_star });
        }

        if last_value - g.value <= 1e-12 * g.value.abs().max(1.0) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        last_value = g.value;
        if stalled >= STALL_LIMIT {
            stalled = 0;
            let mut rng = rng_from(substream_indexed(cfg.seed, "stall-perturb", iter as u64));
            let noise = gaussian_vec(&mut rng, a.len());
            let mut t = project_out(&noise, a.as_slice());
            let n = nrm2(&t);
            if n > 0.0 {
                scale(&mut t, STALL_NOISE / n);
                axpy(&mut t, 1.0, a.as_slice());
                a = Kernel::project_new(t, a.dims(), a.constraint())?;
                warm = Some(g.x_star.x_star);
                continue;
            }
        }

        a = match cfg.step_policy {
            StepPolicy::FixedStep(s) => retract_step(&a, &g.riem_grad, s)?,
            StepPolicy::BacktrackingArmijo { c, shrink } => {
                let g2 = dot(&g.riem_grad, &g.riem_grad);
                let mut s = (step0 * 2.0).min(1e3);
                let mut accepted = None;
                while s >= MIN_STEP {
                    let cand = retract_step(&a, &g.riem_grad, s)?;
                    let f = phi(&cand, y, penalty, &icfg, Some(&g.x_star.x_star))?;
                    if f <= g.value - c * s * g2 {
                        accepted = Some(cand);
                        step0 = s;
                        break;
                    }
                    s *= shrink;
                }
                accepted.ok_or(SbdError::LineSearchFailure { step: s })?
            }
        };
        warm = Some(g.x_star.x_star);
    }
    Err(SbdError::OuterNoConvergence {
        max_iters: cfg.max_outer_iters,
        grad_norm: last_grad,
        best: Box::new(a),
    })
}

/// Gradient of the joint objective in `a` with the activation held fixed.
fn fixed_x_gradient(a: &Kernel, x: &Signal, y: &Signal) -> Result<Vec<f64>> {
    let conv = conv::circ_conv(a, x)?;
    let resid: Vec<f64> =
        conv.as_slice().iter().zip(y.as_slice()).map(|(c, yy)| c - yy).collect();
    let resid = Signal::new(resid, y.dims())?;
    let eg = conv::corr_window(x, &resid, a.dims())?;
    Ok(project_out(&eg, a.as_slice()))
}

/// Alternating block descent at one penalty weight: a capped proximal
/// activation block, then one Riemannian kernel step on the joint
/// objective. Stationary exactly when both blocks are.
fn alternate_fixed_lambda(
    y: &Signal,
    mut a: Kernel,
    penalty: &Penalty,
    cfg: &SolverConfig,
    stage: u8,
    trace: &mut SolveTrace,
    warm0: Option<Signal>,
) -> Result<DescentOutcome> {
    let icfg = inner_cfg(cfg);
    let lambda = penalty.lambda();
    trace.open_segment();

    let mut x = warm0.unwrap_or_else(|| Signal::zeros(y.dims()));
    let mut step0 = 1.0_f64;
    let mut last_grad = f64::INFINITY;

    for _ in 0..cfg.max_outer_iters {
        let block = InnerConfig { max_iters: X_BLOCK_ITERS, ..icfg };
        let (sol, x_stationary) = match solve_activation(&a, y, penalty, &block, Some(&x)) {
            Ok(s) => (s, true),
            Err(SbdError::InnerNoConvergence { best, .. }) => (*best, false),
            Err(e) => return Err(e),
        };
        x = sol.x_star.clone();

        let value = psi(&a, &x, y, penalty)?;
        let rg = fixed_x_gradient(&a, &x, y)?;
        let grad_norm = nrm2(&rg);
        last_grad = grad_norm;
        trace.records.push(TraceRecord {
            stage,
            lambda,
            a: a.as_slice().to_vec(),
            value,
            grad_norm,
            inner_iterations: sol.iterations,
        });
        if x_stationary && grad_norm <= cfg.grad_tol {
            return Ok(DescentOutcome { a, solve: sol });
        }
        if grad_norm > cfg.grad_tol {
            a = match cfg.step_policy {
                StepPolicy::FixedStep(s) => retract_step(&a, &rg, s)?,
                StepPolicy::BacktrackingArmijo { c, shrink } => {
                    let g2 = grad_norm * grad_norm;
                    let mut s = (step0 * 2.0).min(1e3);
                    let mut accepted = None;
                    while s >= MIN_STEP {
                        let cand = retract_step(&a, &rg, s)?;
                        let f = psi(&cand, &x, y, penalty)?;
                        if f <= value - c * s * g2 {
                            accepted = Some(cand);
                            step0 = s;
                            break;
                        }
                        s *= shrink;
                    }
                    accepted.ok_or(SbdError::LineSearchFailure { step: s })?
                }
            };
        }
    }
    Err(SbdError::OuterNoConvergence {
        max_iters: cfg.max_outer_iters,
        grad_norm: last_grad,
        best: Box::new(a),
    })
}

struct Stage1Out {
    a: Kernel,
    lambda0: f64,
}

pub(crate) fn effective_lambda0(y: &Signal, cfg: &SolverConfig, trace: &mut SolveTrace) -> Result<f64> {
    let bound = lambda_upper_bound(y, cfg.k)?;
    if cfg.lambda0 >= bound {
        let clamped = 0.5 * bound;
        trace.warnings.push(format!("lambda0 clamped to {clamped}"));
        Ok(clamped)
    } else {
        Ok(cfg.lambda0)
    }
}

fn stage1_run(
    y: &Signal,
    cfg: &SolverConfig,
    trace: &mut SolveTrace,
    alternating: bool,
) -> Result<Stage1Out> {
    cfg.validate()?;
    if y.norm2() == 0.0 {
        return Err(SbdError::Degenerate("observation is identically zero".into()));
    }
    let lambda0 = effective_lambda0(y, cfg, trace)?;
    let penalty = Penalty::huber(lambda0, cfg.mu)?;
    let mut rng = rng_from(substream(cfg.seed, "stage1-init"));
    let init = Kernel::project_new(
        unit_sphere_vec(&mut rng, cfg.k.len()),
        cfg.k,
        NormConstraint::L2Sphere,
    )?;
    let out = if alternating {
        alternate_fixed_lambda(y, init, &penalty, cfg, 1, trace, None)?
    } else {
        descend_fixed_lambda(y, init, &penalty, cfg, 1, trace, None)?
    };
    Ok(Stage1Out { a: out.a, lambda0 })
}

fn stage2_run(
    y: &Signal,
    a_init: &Kernel,
    cfg: &SolverConfig,
    lambda0: f64,
    mut trace: SolveTrace,
    alternating: bool,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    if a_init.dims() != cfg.k {
        return Err(SbdError::DimMismatch(format!(
            "stage II init has extent {:?}, config expects {:?}",
            a_init.dims(),
            cfg.k
        )));
    }
    let mut a = lift_centered(a_init, cfg.k_lift)?;

    let mut rungs = Vec::new();
    let mut l = lambda0;
    while l >= cfg.lambda_min {
        rungs.push(l);
        l /= cfg.beta;
    }
    if rungs.is_empty() {
        rungs.push(lambda0);
    }

    let mut last: Option<ActivationSolve> = None;
    for &l in &rungs {
        let penalty = Penalty::huber(l, cfg.mu)?;
        let warm = last.map(|s| s.x_star);
        let out = if alternating {
            alternate_fixed_lambda(y, a, &penalty, cfg, 2, &mut trace, warm)?
        } else {
            descend_fixed_lambda(y, a, &penalty, cfg, 2, &mut trace, warm)?
        };
        a = out.a;
        last = Some(out.solve);
    }
    let x_hat = last.expect("ladder has at least one rung").x_star;
    let a_aligned = best_window(&a, cfg.k)?;
    Ok(RecoveryResult { a_hat: a, a_aligned, x_hat, trace, error_metrics: None })
}

/// Stage I: minimize the smoothed objective on the short sphere from a
/// seeded random start. Returns the kernel and its iterate trace.
pub fn stage1(y: &Signal, cfg: &SolverConfig) -> Result<(Kernel, SolveTrace)> {
    let mut trace = SolveTrace::default();
    let out = stage1_run(y, cfg, &mut trace, false)?;
    Ok((out.a, trace))
}

/// Stage II: lift a short kernel into the padded window and follow the
/// penalty ladder down to `lambda_min`.
pub fn stage2(y: &Signal, a_init: &Kernel, cfg: &SolverConfig) -> Result<RecoveryResult> {
    stage2_run(y, a_init, cfg, cfg.lambda0, SolveTrace::default(), false)
}

/// Full pipeline: stage I then stage II, sharing one trace.
/// Deterministic given `cfg.seed`.
pub fn solve(y: &Signal, cfg: &SolverConfig) -> Result<RecoveryResult> {
    let mut trace = SolveTrace::default();
    let s1 = stage1_run(y, cfg, &mut trace, false)?;
    stage2_run(y, &s1.a, cfg, s1.lambda0, trace, false)
}

/// Riemannian descent on the marginal objective at one fixed penalty.
/// Terminates when the Riemannian gradient norm reaches `cfg.grad_tol`.
pub fn minimize_phi_fixed_lambda(
    y: &Signal,
    a_init: &Kernel,
    penalty: &Penalty,
    cfg: &SolverConfig,
) -> Result<(Kernel, SolveTrace)> {
    cfg.validate()?;
    let mut trace = SolveTrace::default();
    let out = descend_fixed_lambda(y, a_init.clone(), penalty, cfg, 0, &mut trace, None)?;
    Ok((out.a, trace))
}

/// Two-stage pipeline with the alternating block descent in place of the
/// marginalized descent. Reaches the same fixed points: at termination the
/// activation block is stationary, so the kernel-block gradient equals the
/// marginal one.
pub fn alternating_solve(y: &Signal, cfg: &SolverConfig) -> Result<RecoveryResult> {
    let mut trace = SolveTrace::default();
    let s1 = stage1_run(y, cfg, &mut trace, true)?;
    stage2_run(y, &s1.a, cfg, s1.lambda0, trace, true)
}
