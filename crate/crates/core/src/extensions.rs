//! Multi-kernel recovery on a product of spheres and gradient-domain blind
//! image deblurring on the nonnegative sphere.
//!
//! Both reuse the two-stage continuation scheme of [`crate::solver`]. The
//! dictionary variant descends jointly over N kernel blocks whose
//! activations couple only through the shared residual, so the marginal
//! gradient splits into per-block tangent projections; a-updates
//! synchronize on all blocks. Deblurring works on the two cyclic
//! finite-difference channels of the observation, which share one kernel;
//! the channel solves are independent given the kernel and run on the
//! worker pool. Nonnegativity replaces the sign symmetry there, and every
//! kernel step retracts by clipping negatives and renormalizing.

use crate::conv::{circ_conv, corr_window};
use crate::error::{Result, SbdError};
use crate::experiments::{kernel_error, KernelError};
use crate::landscape::project_out;
use crate::prox::{
    joint_objective, solve_activation, solve_activation_multi, ActivationSolve, InnerConfig,
    MultiActivationSolve, Penalty,
};
use crate::signal::{Dims, Kernel, NormConstraint, Signal};
use crate::solver::{
    best_window, effective_lambda0, inner_cfg, lift_centered, solve, SolveTrace, SolverConfig,
    StepPolicy, TraceRecord,
};
use crate::util::linalg::{axpy, dot, nrm2, scale};
use crate::util::parallel::par_map;
use crate::util::rng::{gaussian_vec, rng_from, substream, substream_indexed, unit_sphere_vec};

/// Smallest step the joint line searches will try before giving up.
const MIN_STEP: f64 = 1e-14;
/// Iterations without objective decrease before a tangent perturbation.
const STALL_LIMIT: usize = 50;
/// Norm of the tangent perturbation applied on a stall.
const STALL_NOISE: f64 = 1e-6;
/// Penalty weights of the deblurring ladder, first rung also used by
/// stage I; the repeated floor gives the sparsest rung a second pass.
pub const DEBLUR_LADDER: [f64; 4] = [0.1, 0.01, 0.001, 0.001];

fn axes(d: Dims) -> (usize, usize) {
    match d {
        Dims::One(n) => (n, 1),
        Dims::Two(n1, n2) => (n1, n2),
    }
}

/// Bank of same-extent unit-norm kernels recovered jointly.
#[derive(Clone, Debug)]
pub struct KernelBank {
    pub kernels: Vec<Kernel>,
}

impl KernelBank {
    pub fn new(kernels: Vec<Kernel>) -> Result<KernelBank> {
        let bank = KernelBank { kernels };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.kernels.first() else {
            return Err(SbdError::InvalidArgument("kernel bank is empty".into()));
        };
        for a in &self.kernels {
            if a.dims() != first.dims() {
                return Err(SbdError::DimMismatch(format!(
                    "bank mixes kernel extents {:?} and {:?}",
                    first.dims(),
                    a.dims()
                )));
            }
            let n = nrm2(a.as_slice());
            if (n - 1.0).abs() > 1e-8 {
                return Err(SbdError::InvalidArgument(format!(
                    "bank kernel has l2 norm {n}, expected unit"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Largest absolute cyclic cross-correlation between distinct members
    /// over all relative shifts. A diversity diagnostic: recovery degrades
    /// as it approaches 1. Zero for a single-member bank.
    pub fn shift_coherence(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.kernels.len() {
            for j in (i + 1)..self.kernels.len() {
                let a = self.kernels[i].as_slice();
                let b = self.kernels[j].as_slice();
                let (n1, n2) = axes(self.kernels[i].dims());
                for s1 in 0..n1 {
                    for s2 in 0..n2 {
                        let mut c = 0.0;
                        for t1 in 0..n1 {
                            for t2 in 0..n2 {
                                c += a[t1 * n2 + t2]
                                    * b[((t1 + s1) % n1) * n2 + (t2 + s2) % n2];
                            }
                        }
                        worst = worst.max(c.abs());
                    }
                }
            }
        }
        worst
    }
}

/// Output of the multi-kernel pipeline.
#[derive(Clone, Debug)]
pub struct CdlResult {
    /// Final kernels on the lifted sphere, in block order.
    pub bank: KernelBank,
    /// Highest-energy windows of the bank at the original extent.
    pub aligned: KernelBank,
    /// Activation blocks at the final bank and smallest penalty.
    pub activations: Vec<Signal>,
    /// Iterate history; bank iterates store the blocks concatenated.
    pub trace: SolveTrace,
}

/// Residual `sum_n a_n (*) x_n - y` and the penalized objective value.
fn bank_value(
    bank: &[Kernel],
    xs: &[Signal],
    y: &Signal,
    penalty: &Penalty,
) -> Result<(f64, Signal)> {
    let mut resid: Vec<f64> = y.as_slice().iter().map(|v| -v).collect();
    let mut pen = 0.0;
    for (a, x) in bank.iter().zip(xs) {
        let c = circ_conv(a, x)?;
        axpy(&mut resid, 1.0, c.as_slice());
        pen += penalty.value(x.as_slice());
    }
    let fit = 0.5 * dot(&resid, &resid);
    Ok((fit + pen, Signal::new(resid, y.dims())?))
}

fn retract_bank(bank: &[Kernel], dirs: &[Vec<f64>], s: f64) -> Result<Vec<Kernel>> {
    bank.iter()
        .zip(dirs)
        .map(|(a, d)| {
            let mut v = a.as_slice().to_vec();
            axpy(&mut v, -s, d);
            Kernel::project_new(v, a.dims(), a.constraint())
        })
        .collect()
}

struct BankOutcome {
    bank: Vec<Kernel>,
    solve: MultiActivationSolve,
}

/// Joint Riemannian descent over the product of spheres at one penalty
/// weight. Per-block gradients are computed in parallel; the step is
/// accepted jointly, so the bank moves in lockstep.
fn bank_descend(
    y: &Signal,
    mut bank: Vec<Kernel>,
    penalty: &Penalty,
    cfg: &SolverConfig,
    stage: u8,
    trace: &mut SolveTrace,
    warm0: Option<Vec<Signal>>,
) -> Result<BankOutcome> {
    let icfg = inner_cfg(cfg);
    // Line-search candidates only feed the accept/reject comparison, and a
    // looser duality gap only biases their values upward, so rejection
    // stays safe; accepted points are re-solved at full tolerance.
    let mut icfg_probe = icfg.clone();
    icfg_probe.tol *= 100.0;
    let lambda = penalty.lambda();
    trace.open_segment();

    let mut warm = warm0;
    let mut step0 = 1.0_f64;
    let mut stalled = 0usize;
    let mut last_value = f64::INFINITY;
    let mut last_grad = f64::INFINITY;

    for iter in 0..cfg.max_outer_iters {
        let sol = solve_activation_multi(&bank, y, penalty, &icfg, warm.as_deref())?;
        let (value, resid) = bank_value(&bank, &sol.x_stars, y, penalty)?;

        let idx: Vec<usize> = (0..bank.len()).collect();
        let euclids: Vec<Result<Vec<f64>>> =
            par_map(&idx, |&b| corr_window(&sol.x_stars[b], &resid, bank[b].dims()));
        let mut riems = Vec::with_capacity(bank.len());
        let mut g2 = 0.0;
        for (b, e) in euclids.into_iter().enumerate() {
            let r = project_out(&e?, bank[b].as_slice());
            g2 += dot(&r, &r);
            riems.push(r);
        }
        let grad_norm = g2.sqrt();
        last_grad = grad_norm;

        let mut cat = Vec::with_capacity(bank.len() * bank[0].len());
        for a in &bank {
            cat.extend_from_slice(a.as_slice());
        }
        trace.records.push(TraceRecord {
            stage,
            lambda,
            a: cat,
            value,
            grad_norm,
            inner_iterations: sol.iterations,
        });
        if std::env::var_os("SBD_DIAG").is_some() && iter % 25 == 0 {
            let nnz: Vec<usize> = sol
                .x_stars
                .iter()
                .map(|x| x.as_slice().iter().filter(|v| **v != 0.0).count())
                .collect();
            let bg: Vec<String> = riems.iter().map(|r| format!("{:.1e}", nrm2(r))).collect();
            eprintln!(
                "[bank s{stage} l={lambda:.3e} it={iter}] f={value:.6e} g={grad_norm:.3e} nnz={nnz:?} bg={bg:?}"
            );
        }
        if grad_norm <= cfg.grad_tol {
            return Ok(BankOutcome { bank, solve: sol });
        }

        if last_value - value <= 1e-12 * value.abs().max(1.0) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        last_value = value;
        if stalled >= STALL_LIMIT {
            stalled = 0;
            let mut rng =
                rng_from(substream_indexed(cfg.seed, "bank-stall-perturb", iter as u64));
            for a in &mut bank {
                let noise = gaussian_vec(&mut rng, a.len());
                let mut t = project_out(&noise, a.as_slice());
                let n = nrm2(&t);
                if n > 0.0 {
                    scale(&mut t, STALL_NOISE / n);
                    axpy(&mut t, 1.0, a.as_slice());
                    *a = Kernel::project_new(t, a.dims(), a.constraint())?;
                }
            }
            warm = Some(sol.x_stars);
            continue;
        }

        bank = match cfg.step_policy {
            StepPolicy::FixedStep(s) => retract_bank(&bank, &riems, s)?,
            StepPolicy::BacktrackingArmijo { c, shrink } => {
                let mut s = (step0 * 2.0).min(1e3);
                let mut accepted = None;
                while s >= MIN_STEP {
                    let cand = retract_bank(&bank, &riems, s)?;
                    let csol =
                        solve_activation_multi(&cand, y, penalty, &icfg_probe, Some(&sol.x_stars))?;
                    let (f, _) = bank_value(&cand, &csol.x_stars, y, penalty)?;
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
        warm = Some(sol.x_stars);
    }
    Err(SbdError::BankNoConvergence {
        max_iters: cfg.max_outer_iters,
        grad_norm: last_grad,
        bank,
    })
}

/// Observation-derived defaults for an `n_kernels` bank. Same recipe as
/// [`SolverConfig::for_observation`] except the penalty start is divided
/// by sqrt(N): the flat-region bound sees the whole mixture, while each
/// block only ever explains about an N-th of its energy, and a start
/// above a block's own bound freezes that block's activations at zero.
/// For N = 1 this is exactly `for_observation`.
pub fn bank_config(y: &Signal, k: Dims, n_kernels: usize, seed: u64) -> Result<SolverConfig> {
    if n_kernels == 0 {
        return Err(SbdError::InvalidArgument("kernel bank needs at least one member".into()));
    }
    let mut cfg = SolverConfig::for_observation(y, k, seed)?;
    cfg.lambda0 /= (n_kernels as f64).sqrt();
    cfg.lambda_min = 1e-4_f64.min(cfg.lambda0 / 16.0);
    cfg.mu = cfg.lambda_min / 10.0;
    cfg.validate()?;
    Ok(cfg)
}

/// Recovers `n_kernels` kernels and their activations from a
/// sum-of-convolutions observation by the blockwise two-stage scheme.
/// A single-kernel bank is exactly the two-stage solver, bit for bit.
pub fn cdl_solve(y: &Signal, n_kernels: usize, cfg: &SolverConfig) -> Result<CdlResult> {
    if n_kernels == 0 {
        return Err(SbdError::InvalidArgument("kernel bank needs at least one member".into()));
    }
    if n_kernels == 1 {
        let rec = solve(y, cfg)?;
        return Ok(CdlResult {
            bank: KernelBank { kernels: vec![rec.a_hat] },
            aligned: KernelBank { kernels: vec![rec.a_aligned] },
            activations: vec![rec.x_hat],
            trace: rec.trace,
        });
    }
    cfg.validate()?;
    if y.norm2() == 0.0 {
        return Err(SbdError::Degenerate("observation is identically zero".into()));
    }

    let mut trace = SolveTrace::default();
    if cfg.k.len() * n_kernels >= y.len() {
        trace.warnings.push(format!(
            "bank of {} kernels with extent {:?} covers the whole observation {:?}; \
             recovery is not identifiable",
            n_kernels,
            cfg.k,
            y.dims()
        ));
    }
    let lambda0 = effective_lambda0(y, cfg, &mut trace)?;

    // Stage I: joint descent on the short product sphere.
    let penalty = Penalty::huber(lambda0, cfg.mu)?;
    let mut bank = (0..n_kernels)
        .map(|b| {
            let mut rng =
                rng_from(substream_indexed(cfg.seed, "cdl-stage1-init", b as u64));
            Kernel::project_new(
                unit_sphere_vec(&mut rng, cfg.k.len()),
                cfg.k,
                NormConstraint::L2Sphere,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    bank = bank_descend(y, bank, &penalty, cfg, 1, &mut trace, None)?.bank;

    // Stage II: lift every block and follow the shared penalty ladder.
    bank = bank
        .iter()
        .map(|a| lift_centered(a, cfg.k_lift))
        .collect::<Result<Vec<_>>>()?;
    let mut rungs = Vec::new();
    let mut l = lambda0;
    while l >= cfg.lambda_min {
        rungs.push(l);
        l /= cfg.beta;
    }
    if rungs.is_empty() {
        rungs.push(lambda0);
    }
    let mut last: Option<MultiActivationSolve> = None;
    for &l in &rungs {
        let penalty = Penalty::huber(l, cfg.mu)?;
        let warm = last.map(|s| s.x_stars);
        let out = bank_descend(y, bank, &penalty, cfg, 2, &mut trace, warm)?;
        bank = out.bank;
        last = Some(out.solve);
    }
    let activations = last.expect("ladder has at least one rung").x_stars;
    let aligned = bank
        .iter()
        .map(|a| best_window(a, cfg.k))
        .collect::<Result<Vec<_>>>()?;
    Ok(CdlResult {
        bank: KernelBank { kernels: bank },
        aligned: KernelBank { kernels: aligned },
        activations,
        trace,
    })
}

/// Greedy assignment of recovered kernels to ground truths by ascending
/// shift-invariant error; each truth is used once. Returns, per estimate,
/// the index of its assigned truth and the error at that match.
pub fn match_bank(estimates: &[Kernel], truths: &[Kernel]) -> Result<Vec<(usize, KernelError)>> {
    if estimates.is_empty() || estimates.len() != truths.len() {
        return Err(SbdError::DimMismatch(format!(
            "cannot match {} estimates against {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    let n = estimates.len();
    let mut errs = Vec::with_capacity(n * n);
    for e in estimates {
        for t in truths {
            errs.push(kernel_error(e, t)?);
        }
    }
    let mut out: Vec<Option<(usize, KernelError)>> = vec![None; n];
    let mut truth_taken = vec![false; n];
    for _ in 0..n {
        let mut best: Option<(usize, usize)> = None;
        for i in 0..n {
            if out[i].is_some() {
                continue;
            }
            for j in 0..n {
                if truth_taken[j] {
                    continue;
                }
                if best.map_or(true, |(bi, bj)| errs[i * n + j].l2 < errs[bi * n + bj].l2) {
                    best = Some((i, j));
                }
            }
        }
        let (i, j) = best.expect("an unassigned pair remains");
        out[i] = Some((j, errs[i * n + j]));
        truth_taken[j] = true;
    }
    Ok(out.into_iter().map(|o| o.expect("all estimates assigned")).collect())
}

/// Horizontal and vertical cyclic forward-difference images.
#[derive(Clone, Debug)]
pub struct ImagePair {
    pub gx: Signal,
    pub gy: Signal,
}

/// Cyclic forward differences per axis: `gx[i, j] = img[i, j+1] - img[i, j]`
/// and `gy[i, j] = img[i+1, j] - img[i, j]`, indices wrapping. Linear and
/// shift-invariant, so it commutes with cyclic convolution exactly.
pub fn image_gradients(img: &Signal) -> Result<ImagePair> {
    let Dims::Two(n1, n2) = img.dims() else {
        return Err(SbdError::DimMismatch(
            "image gradients need a two-dimensional signal".into(),
        ));
    };
    if n1 < 2 || n2 < 2 {
        return Err(SbdError::InvalidArgument(format!(
            "image gradients need at least 2 x 2 pixels, got {n1} x {n2}"
        )));
    }
    let v = img.as_slice();
    let mut gx = vec![0.0; v.len()];
    let mut gy = vec![0.0; v.len()];
    for i in 0..n1 {
        for j in 0..n2 {
            gx[i * n2 + j] = v[i * n2 + (j + 1) % n2] - v[i * n2 + j];
            gy[i * n2 + j] = v[((i + 1) % n1) * n2 + j] - v[i * n2 + j];
        }
    }
    Ok(ImagePair {
        gx: Signal::new(gx, img.dims())?,
        gy: Signal::new(gy, img.dims())?,
    })
}

/// Output of the gradient-domain deblurring pipeline.
#[derive(Clone, Debug)]
pub struct DeblurResult {
    /// Final kernel on the lifted nonnegative sphere.
    pub a_hat: Kernel,
    /// Highest-energy window of `a_hat` at the requested extent.
    pub a_aligned: Kernel,
    /// Sparse gradient maps of the latent image at the final kernel.
    pub latent_gradients: ImagePair,
    pub trace: SolveTrace,
}

/// Both channel solves at a fixed kernel, run on the worker pool, plus the
/// summed objective value and euclidean kernel gradient. The objective is
/// additive over channels, so the gradient is the per-channel sum.
fn channel_solves(
    a: &Kernel,
    pair: &ImagePair,
    penalty: &Penalty,
    icfg: &InnerConfig,
    warm: Option<(&Signal, &Signal)>,
) -> Result<(f64, Vec<f64>, (ActivationSolve, ActivationSolve))> {
    let chans: [(&Signal, Option<&Signal>); 2] = [
        (&pair.gx, warm.map(|w| w.0)),
        (&pair.gy, warm.map(|w| w.1)),
    ];
    let sols = par_map(&chans, |&(yc, wc)| solve_activation(a, yc, penalty, icfg, wc));
    let mut it = sols.into_iter();
    let s1 = it.next().expect("two channels")?;
    let s2 = it.next().expect("two channels")?;

    let mut value = 0.0;
    let mut euclid = vec![0.0; a.len()];
    for (yc, sc) in [(&pair.gx, &s1), (&pair.gy, &s2)] {
        value += joint_objective(a, &sc.x_star, yc, penalty)?;
        let conv = circ_conv(a, &sc.x_star)?;
        let resid: Vec<f64> = conv
            .as_slice()
            .iter()
            .zip(yc.as_slice())
            .map(|(c, y)| c - y)
            .collect();
        let g = corr_window(&sc.x_star, &Signal::new(resid, yc.dims())?, a.dims())?;
        axpy(&mut euclid, 1.0, &g);
    }
    Ok((value, euclid, (s1, s2)))
}

/// Marginal value of the two-channel objective and its euclidean kernel
/// gradient at the minimizing activations.
pub fn deblur_gradient(
    a: &Kernel,
    pair: &ImagePair,
    penalty: &Penalty,
    icfg: &InnerConfig,
) -> Result<(f64, Vec<f64>)> {
    if pair.gx.dims() != pair.gy.dims() {
        return Err(SbdError::DimMismatch("gradient channels differ in shape".into()));
    }
    let (value, euclid, _) = channel_solves(a, pair, penalty, icfg, None)?;
    Ok((value, euclid))
}

/// Clip negatives and renormalize; the metric projection onto the
/// nonnegative sphere for points near it.
fn retract_nonneg(a: &Kernel, dir: &[f64], s: f64) -> Result<Kernel> {
    let mut v = a.as_slice().to_vec();
    axpy(&mut v, -s, dir);
    Kernel::project_new(v, a.dims(), NormConstraint::NonnegL2Sphere)
}

struct PairOutcome {
    a: Kernel,
    solve: (ActivationSolve, ActivationSolve),
}

/// Projected Riemannian descent on the two-channel marginal objective over
/// the nonnegative sphere at one penalty weight. The descent direction is
/// the tangent gradient with outward components at active zero entries
/// removed; a step along those would be clipped straight back, so the
/// remaining norm is the stationarity measure for the constrained problem.
fn pair_descend(
    pair: &ImagePair,
    mut a: Kernel,
    penalty: &Penalty,
    cfg: &SolverConfig,
    stage: u8,
    trace: &mut SolveTrace,
    warm0: Option<(Signal, Signal)>,
) -> Result<PairOutcome> {
    let icfg = inner_cfg(cfg);
    // Same loose-candidate policy as the bank descent: upward-biased
    // values only make rejection conservative.
    let mut icfg_probe = icfg.clone();
    icfg_probe.tol *= 100.0;
    let lambda = penalty.lambda();
    trace.open_segment();

    let mut warm = warm0;
    let mut step0 = 1.0_f64;
    let mut last_grad = f64::INFINITY;

    for _ in 0..cfg.max_outer_iters {
        let w = warm.as_ref().map(|(w1, w2)| (w1, w2));
        let (value, euclid, sols) = channel_solves(&a, pair, penalty, &icfg, w)?;

        let mut dir = project_out(&euclid, a.as_slice());
        for (d, &ai) in dir.iter_mut().zip(a.as_slice()) {
            if ai == 0.0 && *d > 0.0 {
                *d = 0.0;
            }
        }
        let g2 = dot(&dir, &dir);
        let grad_norm = g2.sqrt();
        last_grad = grad_norm;

        trace.records.push(TraceRecord {
            stage,
            lambda,
            a: a.as_slice().to_vec(),
            value,
            grad_norm,
            inner_iterations: sols.0.iterations + sols.1.iterations,
        });
        if grad_norm <= cfg.grad_tol {
            return Ok(PairOutcome { a, solve: sols });
        }

        a = match cfg.step_policy {
            StepPolicy::FixedStep(s) => match retract_nonneg(&a, &dir, s) {
                Ok(next) => next,
                // Clip emptied the window: stay at the feasible pre-step
                // point rather than abort.
                Err(SbdError::Degenerate(_)) => a,
                Err(e) => return Err(e),
            },
            StepPolicy::BacktrackingArmijo { c, shrink } => {
                let mut s = (step0 * 2.0).min(1e3);
                let mut accepted = None;
                while s >= MIN_STEP {
                    let cand = match retract_nonneg(&a, &dir, s) {
                        Ok(k) => k,
                        Err(SbdError::Degenerate(_)) => {
                            s *= shrink;
                            continue;
                        }
                        Err(e) => return Err(e),
                    };
                    let cw = (&sols.0.x_star, &sols.1.x_star);
                    let (f, _, _) = channel_solves(&cand, pair, penalty, &icfg_probe, Some(cw))?;
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
        warm = Some((sols.0.x_star, sols.1.x_star));
    }
    Err(SbdError::OuterNoConvergence {
        max_iters: cfg.max_outer_iters,
        grad_norm: last_grad,
        best: Box::new(a),
    })
}

/// Recovers a nonnegative blur kernel and the sparse gradient maps of the
/// latent image from a blurred observation. The model is applied to the
/// finite-difference channels, where natural images are sparse; the
/// penalty ladder is fixed to [`DEBLUR_LADDER`]. Kernel extent comes from
/// `cfg.k` and must be two-dimensional.
pub fn deblur_solve(y_img: &Signal, cfg: &SolverConfig) -> Result<DeblurResult> {
    cfg.validate()?;
    if !matches!(cfg.k, Dims::Two(..)) {
        return Err(SbdError::DimMismatch(
            "deblurring needs a two-dimensional kernel window".into(),
        ));
    }
    let floor = DEBLUR_LADDER[DEBLUR_LADDER.len() - 1];
    if !(cfg.mu < floor) {
        return Err(SbdError::InvalidArgument(format!(
            "smoothing width {} must lie below the ladder floor {floor}",
            cfg.mu
        )));
    }
    if !cfg.k_lift.fits_in(&y_img.dims()) {
        return Err(SbdError::InvalidArgument(format!(
            "lifted window {:?} exceeds the image extent {:?}",
            cfg.k_lift,
            y_img.dims()
        )));
    }
    let pair = image_gradients(y_img)?;
    if pair.gx.norm2() == 0.0 && pair.gy.norm2() == 0.0 {
        return Err(SbdError::Degenerate(
            "constant image carries no gradient information".into(),
        ));
    }

    let mut trace = SolveTrace::default();

    // Stage I: short nonnegative window from a random nonnegative start.
    let mut rng = rng_from(substream(cfg.seed, "deblur-stage1-init"));
    let init: Vec<f64> = unit_sphere_vec(&mut rng, cfg.k.len())
        .into_iter()
        .map(f64::abs)
        .collect();
    let a = Kernel::project_new(init, cfg.k, NormConstraint::NonnegL2Sphere)?;
    let penalty = Penalty::huber(DEBLUR_LADDER[0], cfg.mu)?;
    let out = pair_descend(&pair, a, &penalty, cfg, 1, &mut trace, None)?;

    // Stage II: lifted window down the fixed ladder.
    let mut a = lift_centered(&out.a, cfg.k_lift)?;
    let mut last: Option<(ActivationSolve, ActivationSolve)> = None;
    for &l in &DEBLUR_LADDER {
        let penalty = Penalty::huber(l, cfg.mu)?;
        let warm = last.map(|(s1, s2)| (s1.x_star, s2.x_star));
        let out = pair_descend(&pair, a, &penalty, cfg, 2, &mut trace, warm)?;
        a = out.a;
        last = Some(out.solve);
    }
    let (s1, s2) = last.expect("ladder is nonempty");
    let a_aligned = best_window(&a, cfg.k)?;
    Ok(DeblurResult {
        a_hat: a,
        a_aligned,
        latent_gradients: ImagePair { gx: s1.x_star, gy: s2.x_star },
        trace,
    })
}
