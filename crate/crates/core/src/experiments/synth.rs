//! Synthetic observation generator.
//!
//! Draws a ground-truth kernel and sparse activation from named substreams
//! of a single seed and forms y = a0 (*) x0 + sigma g. Reruns with the same
//! spec are bit-identical. An all-zero activation draw is redrawn from the
//! next indexed substream so the observation is never degenerate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SbdError};
use crate::signal::NormConstraint;
use crate::util::rng::{gaussian_vec, rng_from, substream, substream_indexed, unit_sphere_vec};
use crate::{conv, Dims, Kernel, Signal};

/// Sparse activation distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ActivationModel {
    /// Entries are 1 independently with probability theta, else 0.
    Bernoulli(f64),
    /// Entries are v_i ~ N(0,1) independently with probability theta, else 0.
    BernoulliGaussian(f64),
    /// Fixed amplitudes at random cyclic positions, pairwise at least
    /// `min_gap` apart (one-dimensional domains only).
    SeparatedSpikes { min_gap: usize, amplitudes: Vec<f64> },
}

/// Ground-truth kernel distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelModel {
    /// Given entries (row-major for 2D), renormalized to the unit sphere.
    Explicit(Vec<f64>),
    /// i.i.d. Gaussian entries projected to the unit sphere.
    RandomUnitGaussian,
    /// Truncated Gaussian bump of the given standard deviation (in samples),
    /// centered in the window and renormalized.
    LowpassBump(f64),
}

/// Full description of a synthetic instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub m: Dims,
    pub k: Dims,
    pub activation: ActivationModel,
    pub kernel: KernelModel,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Generated instance: ground truth and observation.
#[derive(Clone, Debug)]
pub struct SynthInstance {
    pub a0: Kernel,
    pub x0: Signal,
    pub y: Signal,
}

impl SynthSpec {
    /// One-dimensional spec with default Bernoulli-Gaussian activation.
    pub fn new_1d(m: usize, k: usize, theta: f64, seed: u64) -> Self {
        SynthSpec {
            m: Dims::One(m),
            k: Dims::One(k),
            activation: ActivationModel::BernoulliGaussian(theta),
            kernel: KernelModel::RandomUnitGaussian,
            noise_sigma: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (m1, m2) = axes(self.m);
        let (k1, k2) = axes(self.k);
        if matches!(self.m, Dims::One(_)) != matches!(self.k, Dims::One(_)) {
            return Err(SbdError::DimMismatch(
                "kernel and signal ranks differ in synthesis spec".into(),
            ));
        }
        if m1 == 0 || m2 == 0 || k1 == 0 || k2 == 0 {
            return Err(SbdError::InvalidArgument("empty synthesis domain".into()));
        }
        if k1 > m1 || k2 > m2 {
            return Err(SbdError::InvalidArgument(
                "kernel extent exceeds signal extent".into(),
            ));
        }
        match &self.activation {
            ActivationModel::Bernoulli(theta) | ActivationModel::BernoulliGaussian(theta) => {
                if !(*theta > 0.0 && *theta <= 1.0) {
                    return Err(SbdError::InvalidArgument(format!(
                        "sparsity theta must lie in (0, 1], got {theta}"
                    )));
                }
            }
            ActivationModel::SeparatedSpikes { min_gap, amplitudes } => {
                if *min_gap < 1 {
                    return Err(SbdError::InvalidArgument("min_gap must be at least 1".into()));
                }
                if amplitudes.is_empty() || amplitudes.iter().all(|v| *v == 0.0) {
                    return Err(SbdError::InvalidArgument(
                        "separated spikes need at least one nonzero amplitude".into(),
                    ));
                }
                if !matches!(self.m, Dims::One(_)) {
                    return Err(SbdError::InvalidArgument(
                        "separated spikes require a one-dimensional domain".into(),
                    ));
                }
                if amplitudes.len().saturating_mul(*min_gap) > m1 {
                    return Err(SbdError::InvalidArgument(format!(
                        "{} spikes with gap {} do not fit in {} samples",
                        amplitudes.len(),
                        min_gap,
                        m1
                    )));
                }
            }
        }
        if let KernelModel::Explicit(values) = &self.kernel {
            if values.len() != self.k.len() {
                return Err(SbdError::DimMismatch(format!(
                    "explicit kernel has {} entries for extent {:?}",
                    values.len(),
                    self.k
                )));
            }
            if values.iter().map(|v| v * v).sum::<f64>() <= 0.0 {
                return Err(SbdError::Degenerate("explicit kernel is zero".into()));
            }
        }
        if let KernelModel::LowpassBump(width) = self.kernel {
            if !(width > 0.0) {
                return Err(SbdError::InvalidArgument(format!(
                    "bump width must be positive, got {width}"
                )));
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(SbdError::InvalidArgument(format!(
                "noise sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

fn axes(d: Dims) -> (usize, usize) {
    match d {
        Dims::One(n) => (n, 1),
        Dims::Two(n1, n2) => (n1, n2),
    }
}

fn draw_kernel(spec: &SynthSpec) -> Kernel {
    let n = spec.k.len();
    let data = match &spec.kernel {
        KernelModel::Explicit(values) => values.clone(),
        KernelModel::RandomUnitGaussian => {
            let mut rng = rng_from(substream(spec.seed, "synth-kernel"));
            unit_sphere_vec(&mut rng, n)
        }
        KernelModel::LowpassBump(width) => {
            let (k1, k2) = axes(spec.k);
            let (c1, c2) = ((k1 as f64 - 1.0) / 2.0, (k2 as f64 - 1.0) / 2.0);
            let mut data = Vec::with_capacity(n);
            for i in 0..k1 {
                for j in 0..k2 {
                    let d1 = i as f64 - c1;
                    let d2 = j as f64 - c2;
                    data.push((-(d1 * d1 + d2 * d2) / (2.0 * width * width)).exp());
                }
            }
            data
        }
    };
    Kernel::project_new(data, spec.k, NormConstraint::L2Sphere)
        .expect("validated kernel spec yields a projectable kernel")
}

fn draw_activation(spec: &SynthSpec, attempt: u64) -> Vec<f64> {
    let n = spec.m.len();
    let mut rng = rng_from(substream_indexed(spec.seed, "synth-activation", attempt));
    match &spec.activation {
        ActivationModel::Bernoulli(theta) => (0..n)
            .map(|_| if rng.gen::<f64>() < *theta { 1.0 } else { 0.0 })
            .collect(),
        ActivationModel::BernoulliGaussian(theta) => {
            // Draw the gate and the value unconditionally so the support
            // pattern alone decides which Gaussians survive.
            let gates: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < *theta).collect();
            let values = gaussian_vec(&mut rng, n);
            gates
                .iter()
                .zip(values)
                .map(|(&g, v)| if g { v } else { 0.0 })
                .collect()
        }
        ActivationModel::SeparatedSpikes { min_gap, amplitudes } => {
            let spikes = amplitudes.len();
            let stride = n / spikes;
            let slack = stride - min_gap;
            let offset = rng.gen_range(0..n);
            let mut x = vec![0.0; n];
            for (j, &amp) in amplitudes.iter().enumerate() {
                let jitter = if slack > 0 { rng.gen_range(0..=slack) } else { 0 };
                x[(offset + j * stride + jitter) % n] = amp;
            }
            x
        }
    }
}

/// Generate a synthetic instance. Deterministic given the spec.
pub fn synth(spec: &SynthSpec) -> Result<SynthInstance> {
    spec.validate()?;
    let a0 = draw_kernel(spec);
    let mut x0_data = draw_activation(spec, 0);
    let mut attempt = 0u64;
    while x0_data.iter().all(|v| *v == 0.0) {
        attempt += 1;
        if attempt > 1000 {
            return Err(SbdError::Degenerate(
                "activation redraw limit reached; sparsity too small for domain".into(),
            ));
        }
        x0_data = draw_activation(spec, attempt);
    }
    let x0 = Signal::new(x0_data, spec.m)?;
    let mut y = conv::circ_conv(&a0, &x0)?;
    if spec.noise_sigma > 0.0 {
        let mut rng = rng_from(substream(spec.seed, "synth-noise"));
        let g = gaussian_vec(&mut rng, y.len());
        let data: Vec<f64> = y
            .as_slice()
            .iter()
            .zip(g)
            .map(|(v, n)| v + spec.noise_sigma * n)
            .collect();
        y = Signal::new(data, spec.m)?;
    }
    Ok(SynthInstance { a0, x0, y })
}
