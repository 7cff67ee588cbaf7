//! Recovery-rate sweeps over sparsity, kernel length, and noise level.
//!
//! Each grid cell runs the full two-stage pipeline on `trials` fresh
//! synthetic instances and aggregates the shift-invariant kernel errors.
//! Cells are enumerated theta-major, then kernel fraction, then noise
//! level; trial `t` of cell `c` draws its instance from the substream
//! `"sweep-trial"` at index `c * trials + t`, so a diagram is a pure
//! function of its config. Trials run in parallel but are reduced in
//! enumeration order. A trial that exhausts its iteration budget scores
//! its final feasible iterate; structural failures (degenerate draw,
//! solver breakdown, infeasible lift) score the max-scale sentinel error
//! instead of aborting the sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SbdError};
use crate::experiments::metrics::kernel_error;
use crate::experiments::synth::{synth, ActivationModel, KernelModel, SynthSpec};
use crate::signal::Dims;
use crate::solver::{solve, SolverConfig};
use crate::util::parallel::par_map;
use crate::util::rng::substream_indexed;

/// Error recorded for a trial whose instance or solve failed structurally
/// (no feasible iterate to score): the diameter-scale value of the
/// l2-normalized metric.
pub const SENTINEL_ERROR: f64 = 1.0;

/// Shift-invariant l2 error at or below which a trial counts as a success
/// when rates are reported.
pub const SUCCESS_THRESHOLD: f64 = 0.05;

/// Grid specification for a sweep; the cells are the cross product of the
/// three axis vectors. Fix `noise_sigmas` to `[0.0]` for a noise-free
/// sparsity/length diagram, or pin `thetas` and `k_fracs` to singletons
/// for a pure noise sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSweepConfig {
    /// Observation length; instances are 1-d.
    pub m: usize,
    /// Bernoulli-Gaussian activation densities.
    pub thetas: Vec<f64>,
    /// Kernel lengths as fractions of `m`; rounded to at least one sample.
    pub k_fracs: Vec<f64>,
    /// Additive noise levels.
    pub noise_sigmas: Vec<f64>,
    /// Instances per cell.
    pub trials: usize,
    /// Root seed; all randomness is derived from it.
    pub seed: u64,
    /// Cap on outer iterations per descent segment. Failed cells burn their
    /// whole budget, so sweeps keep this well below the solver default.
    pub max_outer_iters: usize,
}

impl PhaseSweepConfig {
    /// Noise-free diagram over sparsity and kernel length with the default
    /// per-segment budget.
    pub fn new(m: usize, thetas: Vec<f64>, k_fracs: Vec<f64>, trials: usize, seed: u64) -> Self {
        PhaseSweepConfig {
            m,
            thetas,
            k_fracs,
            noise_sigmas: vec![0.0],
            trials,
            seed,
            max_outer_iters: 150,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(SbdError::InvalidArgument(format!(
                "sweep needs m >= 2, got {}",
                self.m
            )));
        }
        if self.thetas.is_empty() || self.k_fracs.is_empty() || self.noise_sigmas.is_empty() {
            return Err(SbdError::InvalidArgument("sweep grid axis is empty".into()));
        }
        for &t in &self.thetas {
            if !(t > 0.0 && t <= 1.0) {
                return Err(SbdError::InvalidArgument(format!(
                    "sparsity level {t} outside (0, 1]"
                )));
            }
        }
        for &f in &self.k_fracs {
            if !(f > 0.0 && f <= 1.0) {
                return Err(SbdError::InvalidArgument(format!(
                    "kernel fraction {f} outside (0, 1]"
                )));
            }
        }
        for &s in &self.noise_sigmas {
            if !(s >= 0.0) {
                return Err(SbdError::InvalidArgument(format!("noise level {s} is negative")));
            }
        }
        if self.trials == 0 {
            return Err(SbdError::InvalidArgument("sweep needs at least one trial".into()));
        }
        if self.max_outer_iters == 0 {
            return Err(SbdError::InvalidArgument("outer iteration budget is zero".into()));
        }
        Ok(())
    }

    fn kernel_len(&self, k_frac: f64) -> usize {
        ((k_frac * self.m as f64).round() as usize).clamp(1, self.m)
    }
}

/// One grid cell with its per-trial errors in trial order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub theta: f64,
    pub k: usize,
    pub noise_sigma: f64,
    /// Shift-invariant l2 errors, one per trial; structural failures hold
    /// the sentinel.
    pub errors: Vec<f64>,
    pub mean_error: f64,
    /// Fraction of trials at or below [`SUCCESS_THRESHOLD`].
    pub success_rate: f64,
}

/// Aggregated sweep over the full grid, cells in enumeration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub cells: Vec<SweepCell>,
}

/// Runs one trial end to end; budget exhaustion scores the last iterate,
/// every other failure mode collapses to the sentinel.
fn run_trial(cfg: &PhaseSweepConfig, theta: f64, k: usize, sigma: f64, trial_seed: u64) -> f64 {
    let spec = SynthSpec {
        m: Dims::One(cfg.m),
        k: Dims::One(k),
        activation: ActivationModel::BernoulliGaussian(theta),
        kernel: KernelModel::RandomUnitGaussian,
        noise_sigma: sigma,
        seed: trial_seed,
    };
    let Ok(inst) = synth(&spec) else {
        return SENTINEL_ERROR;
    };
    let solver_cfg = match SolverConfig::for_observation(&inst.y, Dims::One(k), trial_seed) {
        Ok(mut c) => {
            c.max_outer_iters = cfg.max_outer_iters;
            c
        }
        Err(_) => return SENTINEL_ERROR,
    };
    match solve(&inst.y, &solver_cfg) {
        Ok(mut rec) => match rec.attach_metrics(&inst.a0) {
            Ok(()) => rec.error_metrics.map_or(SENTINEL_ERROR, |e| e.l2),
            Err(_) => SENTINEL_ERROR,
        },
        // An exhausted iteration budget still leaves a feasible iterate;
        // score it so cells near the transition degrade gradually instead
        // of cliffing straight to the sentinel.
        Err(SbdError::OuterNoConvergence { best, .. }) => {
            kernel_error(&best, &inst.a0).map_or(SENTINEL_ERROR, |e| e.l2)
        }
        Err(_) => SENTINEL_ERROR,
    }
}

/// Full grid sweep. Deterministic in `cfg`; trials are independent work
/// items and may run on the thread pool.
pub fn phase_sweep(cfg: &PhaseSweepConfig) -> Result<PhaseDiagram> {
    cfg.validate()?;

    // Flat work list in cell-major order keeps the seed derivation and the
    // reduction order independent of scheduling.
    let mut work = Vec::new();
    let mut cell_index = 0u64;
    for &theta in &cfg.thetas {
        for &k_frac in &cfg.k_fracs {
            for &sigma in &cfg.noise_sigmas {
                let k = cfg.kernel_len(k_frac);
                for t in 0..cfg.trials {
                    let trial_seed = substream_indexed(
                        cfg.seed,
                        "sweep-trial",
                        cell_index * cfg.trials as u64 + t as u64,
                    );
                    work.push((theta, k, sigma, trial_seed));
                }
                cell_index += 1;
            }
        }
    }

    let errors = par_map(&work, |&(theta, k, sigma, trial_seed)| {
        run_trial(cfg, theta, k, sigma, trial_seed)
    });

    let mut cells = Vec::with_capacity(cell_index as usize);
    for (c, chunk) in errors.chunks(cfg.trials).enumerate() {
        let (theta, k, sigma, _) = work[c * cfg.trials];
        let mean = chunk.iter().sum::<f64>() / cfg.trials as f64;
        let hits = chunk.iter().filter(|&&e| e <= SUCCESS_THRESHOLD).count();
        cells.push(SweepCell {
            theta,
            k,
            noise_sigma: sigma,
            errors: chunk.to_vec(),
            mean_error: mean,
            success_rate: hits as f64 / cfg.trials as f64,
        });
    }

    Ok(PhaseDiagram { m: cfg.m, trials: cfg.trials, seed: cfg.seed, cells })
}

/// Noise sweep at a fixed sparsity and kernel length.
pub fn noise_sweep(
    m: usize,
    theta: f64,
    k_frac: f64,
    noise_sigmas: Vec<f64>,
    trials: usize,
    seed: u64,
) -> Result<PhaseDiagram> {
    let mut cfg = PhaseSweepConfig::new(m, vec![theta], vec![k_frac], trials, seed);
    cfg.noise_sigmas = noise_sigmas;
    phase_sweep(&cfg)
}

/// CSV rendering, one row per cell in enumeration order. Decimal points,
/// comma separators, header row first.
pub fn sweep_to_csv(diagram: &PhaseDiagram) -> String {
    let mut out = String::from("theta,k,k_over_m,noise_sigma,trials,mean_error,success_rate\n");
    for c in &diagram.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.theta,
            c.k,
            c.k as f64 / diagram.m as f64,
            c.noise_sigma,
            diagram.trials,
            c.mean_error,
            c.success_rate
        ));
    }
    out
}
