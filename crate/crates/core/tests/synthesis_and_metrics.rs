//! Synthetic instance generation and the shift/sign-invariant error metric.

use sbd_core::experiments::{
    kernel_error, synth, ActivationModel, KernelModel, SynthSpec,
};
use sbd_core::signal::{cyclic_shift, inject};
use sbd_core::util::rng::{rng_from, substream, unit_sphere_vec};
use sbd_core::{Dims, Kernel, NormConstraint, Shift};

fn sphere_kernel(data: &[f64]) -> Kernel {
    Kernel::project_new(data.to_vec(), Dims::One(data.len()), NormConstraint::L2Sphere).unwrap()
}

fn spec_1d(m: usize, k: usize, activation: ActivationModel, seed: u64) -> SynthSpec {
    SynthSpec {
        m: Dims::One(m),
        k: Dims::One(k),
        activation,
        kernel: KernelModel::RandomUnitGaussian,
        noise_sigma: 0.0,
        seed,
    }
}

#[test]
fn synthesis_is_deterministic_and_consistent() {
    let spec = spec_1d(64, 4, ActivationModel::BernoulliGaussian(0.2), 11);
    let inst1 = synth(&spec).unwrap();
    let inst2 = synth(&spec).unwrap();
    assert_eq!(inst1.a0.as_slice(), inst2.a0.as_slice());
    assert_eq!(inst1.x0.as_slice(), inst2.x0.as_slice());
    assert_eq!(inst1.y.as_slice(), inst2.y.as_slice());

    // Unit kernel; noise-free observation equals the convolution exactly.
    assert!((inst1.a0.as_slice().iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    let conv = sbd_core::conv::circ_conv(&inst1.a0, &inst1.x0).unwrap();
    for (c, y) in conv.as_slice().iter().zip(inst1.y.as_slice()) {
        assert_eq!(c, y);
    }

    // A different seed changes the draw.
    let other = synth(&spec_1d(64, 4, ActivationModel::BernoulliGaussian(0.2), 12)).unwrap();
    assert_ne!(inst1.y.as_slice(), other.y.as_slice());
}

#[test]
fn noise_is_additive_gaussian_of_requested_scale() {
    let mut spec = spec_1d(4096, 5, ActivationModel::Bernoulli(0.1), 3);
    let clean = synth(&spec).unwrap();
    spec.noise_sigma = 0.25;
    let noisy = synth(&spec).unwrap();
    // Same ground truth, observation differs by the noise alone.
    assert_eq!(clean.x0.as_slice(), noisy.x0.as_slice());
    let diffs: Vec<f64> = noisy
        .y
        .as_slice()
        .iter()
        .zip(clean.y.as_slice())
        .map(|(n, c)| n - c)
        .collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / diffs.len() as f64;
    // Sample moments of 4096 N(0, 0.25^2) draws: loose 5-sigma style bands.
    assert!(mean.abs() < 5.0 * 0.25 / (diffs.len() as f64).sqrt(), "mean {mean}");
    assert!((var.sqrt() - 0.25).abs() < 0.02, "std {}", var.sqrt());
}

#[test]
fn bernoulli_support_density_concentrates() {
    // Empirical density within 3 binomial std devs of theta over 100 draws.
    let theta = 0.1;
    let m = 256;
    let mut total_support = 0usize;
    for seed in 0..100u64 {
        let inst = synth(&spec_1d(m, 3, ActivationModel::Bernoulli(theta), seed)).unwrap();
        total_support += inst.x0.as_slice().iter().filter(|v| **v != 0.0).count();
    }
    let n = (100 * m) as f64;
    let std = (theta * (1.0 - theta) / n).sqrt();
    let density = total_support as f64 / n;
    assert!(
        (density - theta).abs() < 3.0 * std,
        "density {density} vs theta {theta} (band {})",
        3.0 * std
    );
}

#[test]
fn zero_activation_draws_are_redrawn() {
    // theta small enough that the first draw is all-zero with probability
    // (1-theta)^m ~ 0.9, so most seeds exercise the redraw path, yet the
    // redraw cap is unreachable (expected ~10 attempts per instance).
    let theta = 0.01;
    let m = 10;
    let mut saw_nonzero = 0;
    for seed in 0..2000u64 {
        let inst = synth(&spec_1d(m, 2, ActivationModel::Bernoulli(theta), seed)).unwrap();
        let support = inst.x0.as_slice().iter().filter(|v| **v != 0.0).count();
        assert!(support > 0, "seed {seed} emitted a zero activation");
        saw_nonzero += 1;
    }
    assert_eq!(saw_nonzero, 2000);
}

#[test]
fn separated_spikes_respect_the_gap() {
    let amplitudes = vec![1.0, -2.0, 0.5];
    for seed in 0..50u64 {
        let spec = spec_1d(
            64,
            4,
            ActivationModel::SeparatedSpikes { min_gap: 8, amplitudes: amplitudes.clone() },
            seed,
        );
        let inst = synth(&spec).unwrap();
        let mut positions: Vec<usize> = inst
            .x0
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        positions.sort_unstable();
        assert_eq!(positions.len(), 3);
        for w in 0..positions.len() {
            let next = positions[(w + 1) % positions.len()];
            let gap = if w + 1 == positions.len() {
                64 + next - positions[w]
            } else {
                next - positions[w]
            };
            assert!(gap >= 8, "seed {seed}: cyclic gap {gap} below minimum");
        }
        // The multiset of amplitudes is placed exactly.
        let mut placed: Vec<f64> =
            inst.x0.as_slice().iter().copied().filter(|v| *v != 0.0).collect();
        placed.sort_by(f64::total_cmp);
        let mut want = amplitudes.clone();
        want.sort_by(f64::total_cmp);
        assert_eq!(placed, want);
    }
}

#[test]
fn explicit_and_bump_kernels_are_normalized_as_given() {
    let spec = SynthSpec {
        m: Dims::One(32),
        k: Dims::One(3),
        activation: ActivationModel::Bernoulli(0.2),
        kernel: KernelModel::Explicit(vec![1.0, 8.0, 2.0]),
        noise_sigma: 0.0,
        seed: 0,
    };
    let inst = synth(&spec).unwrap();
    let want = sphere_kernel(&[1.0, 8.0, 2.0]);
    for (g, w) in inst.a0.as_slice().iter().zip(want.as_slice()) {
        assert!((g - w).abs() < 1e-15);
    }

    let bump = SynthSpec {
        kernel: KernelModel::LowpassBump(1.5),
        k: Dims::One(7),
        ..spec.clone()
    };
    let inst = synth(&bump).unwrap();
    let a = inst.a0.as_slice();
    // Symmetric around the center, peaked there, strictly positive.
    for i in 0..7 {
        assert!(a[i] > 0.0);
        assert!((a[i] - a[6 - i]).abs() < 1e-15);
    }
    assert!(a[3] > a[2] && a[2] > a[1] && a[1] > a[0]);
}

#[test]
fn invalid_specs_are_rejected() {
    let base = spec_1d(16, 3, ActivationModel::Bernoulli(0.1), 0);
    let bad = [
        SynthSpec { activation: ActivationModel::Bernoulli(0.0), ..base.clone() },
        SynthSpec { activation: ActivationModel::Bernoulli(1.5), ..base.clone() },
        SynthSpec {
            activation: ActivationModel::SeparatedSpikes { min_gap: 0, amplitudes: vec![1.0] },
            ..base.clone()
        },
        SynthSpec {
            activation: ActivationModel::SeparatedSpikes {
                min_gap: 9,
                amplitudes: vec![1.0, 1.0],
            },
            ..base.clone()
        },
        SynthSpec { noise_sigma: -0.1, ..base.clone() },
        SynthSpec { k: Dims::One(17), ..base.clone() },
        SynthSpec { kernel: KernelModel::Explicit(vec![1.0]), ..base.clone() },
        SynthSpec { kernel: KernelModel::LowpassBump(0.0), ..base.clone() },
        SynthSpec { m: Dims::Two(4, 4), ..base.clone() },
    ];
    for spec in &bad {
        assert!(synth(spec).is_err(), "accepted {spec:?}");
    }
}

#[test]
fn two_dimensional_synthesis_works() {
    let spec = SynthSpec {
        m: Dims::Two(16, 12),
        k: Dims::Two(3, 4),
        activation: ActivationModel::BernoulliGaussian(0.1),
        kernel: KernelModel::RandomUnitGaussian,
        noise_sigma: 0.0,
        seed: 5,
    };
    let inst = synth(&spec).unwrap();
    assert_eq!(inst.y.dims(), Dims::Two(16, 12));
    assert_eq!(inst.a0.dims(), Dims::Two(3, 4));
    let conv = sbd_core::conv::circ_conv(&inst.a0, &inst.x0).unwrap();
    for (c, y) in conv.as_slice().iter().zip(inst.y.as_slice()) {
        assert_eq!(c, y);
    }
}

#[test]
fn error_is_zero_on_the_symmetry_orbit() {
    let a0 = sphere_kernel(&[1.0, 8.0, 2.0]);
    let same = kernel_error(&a0, &a0).unwrap();
    assert!(same.l1 < 1e-14 && same.l2 < 1e-14);
    assert_eq!(same.shift, (0, 0));
    assert_eq!(same.sign, 1.0);

    // Negated cyclic shift inside a longer window: still zero with signs
    // allowed, and the metric reports the alignment it found.
    let m = Dims::One(9);
    let embedded = inject(&a0, m).unwrap();
    let shifted = cyclic_shift(&embedded, Shift::One(2)).unwrap();
    let neg: Vec<f64> = shifted.as_slice().iter().map(|v| -v).collect();
    let a_hat = Kernel::project_new(neg, m, NormConstraint::L2Sphere).unwrap();
    let err = kernel_error(&a_hat, &a0).unwrap();
    assert!(err.l1 < 1e-12 && err.l2 < 1e-12, "l1 {} l2 {}", err.l1, err.l2);
    assert_eq!(err.sign, -1.0);
}

#[test]
fn error_matches_brute_force_alignment_oracle() {
    // Independent oracle: explicit double loop over all shifts and signs of
    // the common 8 + 3 = 11 point window.
    let mut rng = rng_from(substream(77, "metric-oracle"));
    for _ in 0..20 {
        let a_hat_short = unit_sphere_vec(&mut rng, 3);
        let a0_short = unit_sphere_vec(&mut rng, 3);
        let a_hat = Kernel::project_new(
            {
                let mut v = vec![0.0; 8];
                v[..3].copy_from_slice(&a_hat_short);
                v
            },
            Dims::One(8),
            NormConstraint::L2Sphere,
        )
        .unwrap();
        let a0 = sphere_kernel(&a0_short);

        let got = kernel_error(&a_hat, &a0).unwrap();

        let n = 8 + 3;
        let embed = |src: &[f64], norm: f64| -> Vec<f64> {
            let mut v = vec![0.0; n];
            for (i, s) in src.iter().enumerate() {
                v[i] = s / norm;
            }
            v
        };
        let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
        let l2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let hat_slice = a_hat.as_slice();
        let mut best_l1 = f64::INFINITY;
        let mut best_l2 = f64::INFINITY;
        for shift in 0..n {
            for sign in [1.0, -1.0] {
                let h1 = embed(hat_slice, l1(hat_slice));
                let h2 = embed(hat_slice, l2(hat_slice));
                let r1 = embed(&a0_short, l1(&a0_short));
                let r2 = embed(&a0_short, l2(&a0_short));
                let mut d1 = 0.0;
                let mut d2 = 0.0;
                for i in 0..n {
                    let j = (i + n - shift) % n;
                    d1 += (sign * h1[j] - r1[i]) * (sign * h1[j] - r1[i]);
                    d2 += (sign * h2[j] - r2[i]) * (sign * h2[j] - r2[i]);
                }
                best_l1 = best_l1.min(d1.sqrt());
                best_l2 = best_l2.min(d2.sqrt());
            }
        }
        assert!((got.l1 - best_l1).abs() < 1e-12, "{} vs {best_l1}", got.l1);
        assert!((got.l2 - best_l2).abs() < 1e-12, "{} vs {best_l2}", got.l2);
    }
}

#[test]
fn nonnegative_estimates_skip_the_sign_flip() {
    let a0 = sphere_kernel(&[1.0, 2.0, 3.0]);
    let neg: Vec<f64> = a0.as_slice().iter().map(|v| -v).collect();
    let flipped = Kernel::project_new(neg, Dims::One(3), NormConstraint::L2Sphere).unwrap();
    // Free sign: exact match.
    assert!(kernel_error(&flipped, &a0).unwrap().l2 < 1e-14);

    // A nonnegative estimate must be compared as-is, so the distance to a
    // reference it cannot flip to is strictly positive.
    let nonneg =
        Kernel::project_new(vec![1.0, 2.0, 3.0], Dims::One(3), NormConstraint::NonnegL2Sphere)
            .unwrap();
    let neg_ref =
        Kernel::project_new(vec![-1.0, -2.0, -3.0], Dims::One(3), NormConstraint::L2Sphere)
            .unwrap();
    let err = kernel_error(&nonneg, &neg_ref).unwrap();
    assert!(err.l2 > 0.5, "sign flip should be unavailable, got {}", err.l2);
    assert_eq!(err.sign, 1.0);
}

#[test]
fn zero_kernels_are_rejected() {
    let a0 = sphere_kernel(&[1.0, 2.0]);
    let zero = Kernel::new(vec![0.0, 0.0], Dims::One(2), NormConstraint::L2Sphere);
    // The kernel type itself may refuse zero data; build the error path
    // through whichever layer rejects first.
    match zero {
        Ok(z) => {
            assert!(kernel_error(&z, &a0).is_err());
            assert!(kernel_error(&a0, &z).is_err());
        }
        Err(_) => {
            // Constraint projection already refuses zero kernels; the
            // metric can never see one through the public API.
        }
    }
}

#[test]
fn two_dimensional_error_aligns_planar_shifts() {
    let data: Vec<f64> = vec![0.9, 0.1, 0.3, 0.2, 0.5, 0.05];
    let a0 = Kernel::project_new(data.clone(), Dims::Two(2, 3), NormConstraint::L2Sphere).unwrap();
    // Embed in 5x7, shift by (1, 4), negate.
    let (n1, n2) = (5, 7);
    let mut big = vec![0.0; n1 * n2];
    for i in 0..2 {
        for j in 0..3 {
            big[((i + 1) % n1) * n2 + (j + 4) % n2] = -a0.as_slice()[i * 3 + j];
        }
    }
    let a_hat = Kernel::project_new(big, Dims::Two(n1, n2), NormConstraint::L2Sphere).unwrap();
    let err = kernel_error(&a_hat, &a0).unwrap();
    assert!(err.l2 < 1e-12 && err.l1 < 1e-12);
    assert_eq!(err.sign, -1.0);
}
