//! Calculus on general lq spheres with general lp fits: value oracles,
//! finite differences for gradients, gradient-field differences for the
//! Hessian (the q-renormalization retraction is not second order, so value
//! differences would pick up curvature of the retraction itself), closed
//! form stationary pairs at truncation windows, and the local strong
//! convexity constant there.

use sbd_core::landscape::{lq_normal_direction, pq_derivatives, pq_value, psi, Surrogate};
use sbd_core::prox::Penalty;
use sbd_core::signal::{cyclic_shift, inject, project};
use sbd_core::util::linalg::{dot, nrm2, nrm_q};
use sbd_core::util::rng::{gaussian_vec, rng_from, substream};
use sbd_core::{Dims, Kernel, NormConstraint, SbdError, Shift, Signal};

fn lq_kernel(v: Vec<f64>, q: f64) -> Kernel {
    let k = v.len();
    let constraint = if q == 2.0 {
        NormConstraint::L2Sphere
    } else {
        NormConstraint::LqSphere(q)
    };
    Kernel::project_new(v, Dims::One(k), constraint).unwrap()
}

/// lq-sphere tangent vector at `a`: l2-orthogonal to the normal direction.
fn tangent_at(a: &Kernel, q: f64, raw: &[f64]) -> Vec<f64> {
    let xi = lq_normal_direction(a.as_slice(), q);
    let c = dot(raw, &xi);
    raw.iter().zip(&xi).map(|(r, x)| r - c * x).collect()
}

fn retract(a: &Kernel, q: f64, delta: &[f64], t: f64) -> Kernel {
    let v: Vec<f64> = a
        .as_slice()
        .iter()
        .zip(delta)
        .map(|(ai, di)| ai + t * di)
        .collect();
    lq_kernel(v, q)
}

const PAIRS: [(f64, f64); 6] = [
    (2.0, 2.0),
    (3.0, 3.0),
    (4.0, 4.0),
    (3.0, 2.0),
    (2.0, 4.0),
    (3.5, 2.5),
];

#[test]
fn value_matches_scalar_loop_oracle() {
    let mut rng = rng_from(substream(51, "pq-value"));
    let (k, m) = (3usize, 10usize);
    for &(p, q) in &PAIRS {
        let a = lq_kernel(gaussian_vec(&mut rng, k), q);
        let x = Signal::from_1d(gaussian_vec(&mut rng, m)).unwrap();
        let y = Signal::from_1d(gaussian_vec(&mut rng, m)).unwrap();
        let lambda = 0.2;

        let mut fit = 0.0;
        for t in 0..m {
            let mut conv = 0.0;
            for (j, &aj) in a.as_slice().iter().enumerate() {
                conv += aj * x.as_slice()[(t + m - j) % m];
            }
            fit += (y.as_slice()[t] - conv).abs().powf(p);
        }
        let manual = fit / p + lambda * x.as_slice().iter().map(|v| v.abs()).sum::<f64>();
        let got = pq_value(&a, &x, &y, p, lambda).unwrap();
        assert!((got - manual).abs() <= 1e-12 * manual.abs().max(1.0), "p = {p}, q = {q}");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = rng_from(substream(52, "pq-grad"));
    let (k, m) = (3usize, 10usize);
    let lambda = 0.2;
    for &(p, q) in &PAIRS {
        let a = lq_kernel(gaussian_vec(&mut rng, k), q);
        let x = Signal::from_1d(gaussian_vec(&mut rng, m)).unwrap();
        let y = Signal::from_1d(gaussian_vec(&mut rng, m)).unwrap();
        let d = pq_derivatives(&a, &x, &y, p, lambda).unwrap();

        // The sphere gradient is orthogonal to the normal direction.
        let xi = lq_normal_direction(a.as_slice(), q);
        assert!(dot(&d.riem_grad, &xi).abs() <= 1e-10, "p = {p}, q = {q}");
        assert!((d.value - pq_value(&a, &x, &y, p, lambda).unwrap()).abs() <= 1e-14);

        for _ in 0..5 {
            let delta = tangent_at(&a, q, &gaussian_vec(&mut rng, k));
            let h = 1e-6;
            let fd = (pq_value(&retract(&a, q, &delta, h), &x, &y, p, lambda).unwrap()
                - pq_value(&retract(&a, q, &delta, -h), &x, &y, p, lambda).unwrap())
                / (2.0 * h);
            let an = dot(&d.riem_grad, &delta);
            assert!(
                (fd - an).abs() <= 1e-5 * an.abs().max(1.0),
                "p = {p}, q = {q}: fd {fd} vs analytic {an}"
            );
        }
    }
}

#[test]
fn hessian_matches_gradient_field_differences() {
    let mut rng = rng_from(substream(53, "pq-hess"));
    let (k, m) = (3usize, 10usize);
    let lambda = 0.2;
    for &(p, q) in &PAIRS {
        let a = lq_kernel(gaussian_vec(&mut rng, k), q);
        let x = Signal::from_1d(gaussian_vec(&mut rng, m)).unwrap();
        let y = Signal::from_1d(gaussian_vec(&mut rng, m)).unwrap();
        let d = pq_derivatives(&a, &x, &y, p, lambda).unwrap();
        let xi = lq_normal_direction(a.as_slice(), q);

        for _ in 0..4 {
            let d1 = tangent_at(&a, q, &gaussian_vec(&mut rng, k));
            let d2 = tangent_at(&a, q, &gaussian_vec(&mut rng, k));

            // Operator output is tangent and the form is symmetric.
            let hd1 = d.hess_apply(&d1);
            assert!(dot(&hd1, &xi).abs() <= 1e-10);
            let sym = dot(&d.hess_apply(&d2), &d1) - dot(&hd1, &d2);
            assert!(sym.abs() <= 1e-10, "p = {p}, q = {q}: asymmetry {sym}");

            // Differencing the gradient field along the retraction gives the
            // covariant derivative paired against a fixed tangent probe.
            let h = 1e-5;
            let gp = pq_derivatives(&retract(&a, q, &d1, h), &x, &y, p, lambda)
                .unwrap()
                .riem_grad;
            let gm = pq_derivatives(&retract(&a, q, &d1, -h), &x, &y, p, lambda)
                .unwrap()
                .riem_grad;
            let fd = (dot(&gp, &d2) - dot(&gm, &d2)) / (2.0 * h);
            let an = dot(&hd1, &d2);
            assert!(
                (fd - an).abs() <= 1e-4 * an.abs().max(1.0),
                "p = {p}, q = {q}: fd {fd} vs analytic {an}"
            );
        }
    }
}

#[test]
fn reduces_to_sphere_calculus_at_p_q_two() {
    let mut rng = rng_from(substream(54, "pq-reduce"));
    let (k, m) = (4usize, 12usize);
    let a = Kernel::on_sphere_1d(gaussian_vec(&mut rng, k)).unwrap();
    let x = Signal::from_1d(gaussian_vec(&mut rng, m)).unwrap();
    let y = Signal::from_1d(gaussian_vec(&mut rng, m)).unwrap();
    let lambda = 0.3;

    // Normal direction degenerates to the point itself.
    let xi = lq_normal_direction(a.as_slice(), 2.0);
    for (u, v) in xi.iter().zip(a.as_slice()) {
        assert!((u - v).abs() <= 1e-14);
    }

    // Value coincides with the quadratic joint objective.
    let got = pq_value(&a, &x, &y, 2.0, lambda).unwrap();
    let want = psi(&a, &x, &y, &Penalty::l1(lambda).unwrap()).unwrap();
    assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));

    // Gradient coincides with the projected correlation of the residual.
    let d = pq_derivatives(&a, &x, &y, 2.0, lambda).unwrap();
    let conv = sbd_core::conv::circ_conv(&a, &x).unwrap();
    let resid = Signal::from_1d(
        conv.as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(c, yi)| c - yi)
            .collect(),
    )
    .unwrap();
    let eg = sbd_core::conv::corr_window(&x, &resid, a.dims()).unwrap();
    let along = dot(&eg, a.as_slice());
    for i in 0..k {
        assert!((d.euclid_grad[i] - eg[i]).abs() <= 1e-12);
        let rg = eg[i] - along * a.as_slice()[i];
        assert!((d.riem_grad[i] - rg).abs() <= 1e-12);
    }
}

/// Shared instance for truncation tests: window of the shifted, embedded
/// kernel together with its lq normalization.
fn window_of(a0: &Kernel, m: Dims, tau: i64) -> Vec<f64> {
    let embedded = inject(a0, m).unwrap();
    project(&cyclic_shift(&embedded, Shift::One(-tau)).unwrap(), a0.dims()).unwrap()
}

#[test]
fn truncation_pairs_are_stationary_when_exponents_match() {
    let m = 16usize;
    let lambda = 0.4_f64;
    for p in [2.0, 3.0, 4.0] {
        let q = p;
        let a0 = lq_kernel(vec![1.0, 8.0, 2.0], q);
        let y = inject(&a0, Dims::One(m)).unwrap();
        let mut qualified = 0;
        for tau in -2i64..=2 {
            let w = window_of(&a0, Dims::One(m), tau);
            let eta = nrm_q(&w, q);
            let alpha = eta - lambda.powf(1.0 / (p - 1.0));
            if eta == 0.0 || alpha <= 1e-6 {
                continue;
            }
            for sign in [1.0, -1.0] {
                let bar = lq_kernel(w.iter().map(|v| sign * v).collect(), q);
                let pos = tau.rem_euclid(m as i64) as usize;
                let mut xv = vec![0.0; m];
                xv[pos] = sign * alpha;
                let x = Signal::from_1d(xv).unwrap();

                // Kernel-side stationarity.
                let d = pq_derivatives(&bar, &x, &y, p, lambda).unwrap();
                assert!(
                    nrm2(&d.riem_grad) <= 1e-10,
                    "p = {p}, tau = {tau}, sign = {sign}: |grad| = {}",
                    nrm2(&d.riem_grad)
                );

                // Activation-side optimality: the loss derivative correlated
                // with each shifted copy of the kernel stays within the
                // threshold, with equality at the active offset.
                let mut conv = vec![0.0; m];
                for (j, &aj) in bar.as_slice().iter().enumerate() {
                    conv[(pos + j) % m] += aj * sign * alpha;
                }
                let s: Vec<f64> = (0..m)
                    .map(|t| {
                        let r = y.as_slice()[t] - conv[t];
                        r.signum() * r.abs().powf(p - 1.0)
                    })
                    .collect();
                for j in 0..m {
                    let mut corr_j = 0.0;
                    for (l, &al) in bar.as_slice().iter().enumerate() {
                        corr_j += al * s[(j + l) % m];
                    }
                    if j == pos {
                        assert!(
                            (corr_j - lambda * sign).abs() <= 1e-10,
                            "p = {p}, tau = {tau}: active condition {corr_j}"
                        );
                    } else {
                        assert!(
                            corr_j.abs() <= lambda + 1e-10,
                            "p = {p}, tau = {tau}, offset {j}: |{corr_j}| > {lambda}"
                        );
                    }
                }
                qualified += 1;
            }
        }
        assert!(qualified >= 6, "p = {p}: only {qualified} signed pairs qualified");
    }
}

#[test]
fn truncation_pairs_are_not_stationary_when_exponents_differ() {
    let m = 16usize;
    let lambda = 0.4_f64;
    for (p, q) in [(2.0, 4.0), (3.0, 2.0)] {
        let a0 = lq_kernel(vec![1.0, 8.0, 2.0], q);
        let y = inject(&a0, Dims::One(m)).unwrap();

        // Multi-entry window: the fit gradient is parallel to the (p-1)st
        // signed power of the window while the normal direction is the
        // (q-1)st; with distinct magnitudes these are not parallel, so the
        // sphere gradient cannot vanish.
        let w = window_of(&a0, Dims::One(m), 0);
        let eta = nrm_q(&w, q);
        let wp = w.iter().map(|v| v.abs().powf(p)).sum::<f64>();
        let alpha = eta * (1.0 - (lambda * eta / wp).powf(1.0 / (p - 1.0)));
        assert!(alpha > 0.0);
        let bar = lq_kernel(w.clone(), q);
        let mut xv = vec![0.0; m];
        xv[0] = alpha;
        let x = Signal::from_1d(xv).unwrap();
        let d = pq_derivatives(&bar, &x, &y, p, lambda).unwrap();
        assert!(
            nrm2(&d.riem_grad) > 1e-4,
            "p = {p}, q = {q}: sphere gradient {} too small",
            nrm2(&d.riem_grad)
        );

        // The two direction fields themselves are misaligned.
        let v1: Vec<f64> = w
            .iter()
            .map(|&v| (v - alpha * v / eta).signum() * (v - alpha * v / eta).abs().powf(p - 1.0))
            .collect();
        let v2: Vec<f64> = bar
            .as_slice()
            .iter()
            .map(|&v| v.signum() * v.abs().powf(q - 1.0))
            .collect();
        let cosine = dot(&v1, &v2) / (nrm2(&v1) * nrm2(&v2));
        assert!(1.0 - cosine.abs() > 1e-3, "p = {p}, q = {q}: cosine {cosine}");

        // One-hot window: both powers collapse onto the same single
        // coordinate, so the kernel-side gradient vanishes for every
        // exponent pair.
        let w = window_of(&a0, Dims::One(m), 2);
        assert_eq!(w.iter().filter(|v| v.abs() > 0.0).count(), 1);
        let eta = nrm_q(&w, q);
        let wp = w.iter().map(|v| v.abs().powf(p)).sum::<f64>();
        let alpha_small = {
            let lam = 0.01;
            eta * (1.0 - (lam * eta / wp).powf(1.0 / (p - 1.0)))
        };
        assert!(alpha_small > 0.0);
        let bar = lq_kernel(w, q);
        let mut xv = vec![0.0; m];
        xv[2] = alpha_small;
        let x = Signal::from_1d(xv).unwrap();
        let d = pq_derivatives(&bar, &x, &y, p, 0.01).unwrap();
        assert!(
            nrm2(&d.riem_grad) <= 1e-12,
            "one-hot window should be kernel-stationary, got {}",
            nrm2(&d.riem_grad)
        );
    }
}

#[test]
fn local_convexity_constant_at_matched_truncations() {
    let m = 16usize;
    let lambda = 0.1_f64;
    let mut rng = rng_from(substream(55, "pq-convex"));
    for p in [2.0, 3.0, 4.0] {
        let q = p;
        let a0 = lq_kernel(vec![1.0, 8.0, 2.0], q);
        let y = inject(&a0, Dims::One(m)).unwrap();
        let alpha = 1.0 - lambda.powf(1.0 / (p - 1.0));
        let mut xv = vec![0.0; m];
        xv[0] = alpha;
        let x = Signal::from_1d(xv).unwrap();
        let d = pq_derivatives(&a0, &x, &y, p, lambda).unwrap();
        assert!(nrm2(&d.riem_grad) <= 1e-10);

        let constant = (q - 1.0) * alpha * (alpha * lambda.powf((p - 2.0) / (p - 1.0)) + lambda);
        for _ in 0..10 {
            let delta = tangent_at(&a0, q, &gaussian_vec(&mut rng, 3));
            let got = d.hess_quadratic_form(&delta);
            let weighted: f64 = a0
                .as_slice()
                .iter()
                .zip(&delta)
                .map(|(ai, di)| ai.abs().powf(q - 2.0) * di * di)
                .sum();
            // Exact closed form on support-contained tangents.
            assert!(
                (got - constant * weighted).abs() <= 1e-10 * got.abs().max(1.0),
                "p = {p}: form {got} vs {}",
                constant * weighted
            );
            // Lower bound with the smallest coordinate weight.
            let min_w = a0
                .as_slice()
                .iter()
                .map(|ai| ai.abs().powf(q - 2.0))
                .fold(f64::INFINITY, f64::min);
            let norm2: f64 = delta.iter().map(|v| v * v).sum();
            assert!(got >= constant * min_w * norm2 - 1e-12);
        }
    }

    // Dropping the leading alpha from the constant overstates the curvature:
    // a tangent direction concentrated on the smallest kernel coordinate
    // falls below that inflated bound.
    let q = 4.0;
    let a0 = lq_kernel(vec![1.0, 8.0, 2.0], q);
    let y = inject(&a0, Dims::One(m)).unwrap();
    let alpha = 1.0 - lambda.powf(1.0 / (q - 1.0));
    let mut xv = vec![0.0; m];
    xv[0] = alpha;
    let x = Signal::from_1d(xv).unwrap();
    let d = pq_derivatives(&a0, &x, &y, q, lambda).unwrap();
    let inflated = (q - 1.0) * alpha * (lambda.powf((q - 2.0) / (q - 1.0)) + lambda);
    let min_idx = (0..3)
        .min_by(|&i, &j| a0.as_slice()[i].abs().total_cmp(&a0.as_slice()[j].abs()))
        .unwrap();
    let mut probe = vec![0.0; 3];
    probe[min_idx] = 1.0;
    let delta = tangent_at(&a0, q, &probe);
    let got = d.hess_quadratic_form(&delta);
    let min_w = a0
        .as_slice()
        .iter()
        .map(|ai| ai.abs().powf(q - 2.0))
        .fold(f64::INFINITY, f64::min);
    let norm2: f64 = delta.iter().map(|v| v * v).sum();
    assert!(
        got < inflated * min_w * norm2,
        "inflated constant {inflated} should overstate the form {got}"
    );
}

#[test]
fn matched_quadratic_case_agrees_with_soft_threshold_surrogate() {
    // For p = q = 2 at the zero-shift truncation, the fixed-activation
    // Hessian and the surrogate's piecewise Hessian agree on every tangent
    // direction: the activation response is first-order flat there.
    let m = Dims::One(16);
    let lambda = 0.4_f64;
    let a0 = Kernel::on_sphere_1d(vec![1.0, 8.0, 2.0]).unwrap();
    let y = inject(&a0, m).unwrap();
    let s = Surrogate::new(a0.clone(), m, lambda).unwrap();
    let sigma = s.region(&a0).unwrap();
    assert_eq!(sigma.support(), &[0]);
    let ds = s.derivatives(&a0, &sigma).unwrap();

    let mut xv = vec![0.0; 16];
    xv[0] = 1.0 - lambda;
    let x = Signal::from_1d(xv).unwrap();
    let dp = pq_derivatives(&a0, &x, &y, 2.0, lambda).unwrap();
    assert!(nrm2(&dp.riem_grad) <= 1e-12);
    assert!(nrm2(&ds.riem_grad) <= 1e-12);

    let mut rng = rng_from(substream(56, "pq-cross"));
    for _ in 0..10 {
        let delta = tangent_at(&a0, 2.0, &gaussian_vec(&mut rng, 3));
        let qp = dp.hess_quadratic_form(&delta);
        let qs = ds.hess_quadratic_form(&delta);
        assert!(
            (qp - qs).abs() <= 1e-10 * qs.abs().max(1.0),
            "fixed-activation {qp} vs surrogate {qs}"
        );
    }
}

#[test]
fn unsupported_exponents_are_rejected() {
    let a = Kernel::on_sphere_1d(vec![1.0, 0.5]).unwrap();
    let x = Signal::from_1d(vec![0.0; 8]).unwrap();
    let y = Signal::from_1d(vec![1.0; 8]).unwrap();
    assert!(matches!(
        pq_value(&a, &x, &y, 1.5, 0.1),
        Err(SbdError::Unsupported(_))
    ));
    assert!(matches!(
        pq_derivatives(&a, &x, &y, 1.5, 0.1),
        Err(SbdError::Unsupported(_))
    ));

    // Kernels on constraint sets without a usable sphere exponent.
    let nn = Kernel::project_new(
        vec![0.6, 0.8],
        Dims::Two(1, 2),
        NormConstraint::NonnegL2Sphere,
    );
    if let Ok(nn) = nn {
        let x2 = Signal::new(vec![0.0; 8], Dims::Two(2, 4)).unwrap();
        let y2 = Signal::new(vec![1.0; 8], Dims::Two(2, 4)).unwrap();
        assert!(matches!(
            pq_derivatives(&nn, &x2, &y2, 2.0, 0.1),
            Err(SbdError::Unsupported(_))
        ));
    }
}
