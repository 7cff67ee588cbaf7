//! Dense sampling of the marginal objective over the kernel sphere, local
//! minimum detection, and the matching low-dimensional study on the
//! positive simplex.
//!
//! The sphere grid is a refined icosahedron, so it only exists for length-3
//! kernels; a random-sample mode covers other lengths. Grid vertices that
//! sit strictly below all their neighbors seed a gradient polish, and a
//! polished point is only reported once it passes both genuineness bars:
//! gradient norm at most `grad_tol` and an estimated smallest tangent
//! Hessian eigenvalue of at least `-grad_tol`-scale. Every reported
//! minimum is tagged with its nearest signed shift truncation of the
//! ground-truth kernel.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::conv::circ_conv;
use crate::error::{Result, SbdError};
use crate::landscape::{phi, phi_gradient};
use crate::prox::{InnerConfig, Penalty};
use crate::signal::{shift_truncation, Dims, Kernel, NormConstraint, Shift, Signal};
use crate::util::linalg;
use crate::util::parallel::par_map;
use crate::util::rng::{rng_from, substream, unit_sphere_vec};

const CURVATURE_TOL: f64 = 1e-8;
const FD_STEP: f64 = 1e-3;
const MIN_STEP: f64 = 1e-14;
const ARMIJO_C: f64 = 1e-4;

/// How evaluation points are placed on the sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SampleMode {
    /// Icosahedron refined `refinements` times: `10 * 4^r + 2` vertices
    /// with a geodesic neighbor graph. Kernels must have length 3.
    Icosphere { refinements: usize },
    /// Independent uniform sphere points; no neighbor graph, so every
    /// point seeds a polish. Works for any kernel length.
    Random { count: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSampleConfig {
    pub lambda: f64,
    /// Smoothing width for the penalty; `None` keeps the exact l1 marginal.
    pub mu: Option<f64>,
    pub mode: SampleMode,
    pub polish_iters: usize,
    pub grad_tol: f64,
    /// Polished points closer than this angle collapse to one minimum.
    pub dedupe_angle: f64,
}

impl LandscapeSampleConfig {
    pub fn new(lambda: f64) -> Self {
        LandscapeSampleConfig {
            lambda,
            mu: None,
            mode: SampleMode::Icosphere { refinements: 4 },
            polish_iters: 500,
            grad_tol: 1e-8,
            dedupe_angle: 1e-2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(SbdError::InvalidArgument(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu < self.lambda) {
                return Err(SbdError::InvalidArgument(format!(
                    "smoothing width {mu} outside (0, lambda)"
                )));
            }
        }
        match self.mode {
            SampleMode::Icosphere { .. } => {}
            SampleMode::Random { count, .. } => {
                if count == 0 {
                    return Err(SbdError::InvalidArgument("random sample count is zero".into()));
                }
            }
        }
        if self.polish_iters == 0 {
            return Err(SbdError::InvalidArgument("polish budget is zero".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.dedupe_angle > 0.0) {
            return Err(SbdError::InvalidArgument(
                "gradient tolerance and dedupe angle must be positive".into(),
            ));
        }
        Ok(())
    }

    fn penalty(&self) -> Result<Penalty> {
        match self.mu {
            Some(mu) => Penalty::huber(self.lambda, mu),
            None => Penalty::l1(self.lambda),
        }
    }
}

/// One sphere point and its marginal objective value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub a: Vec<f64>,
    pub value: f64,
}

/// A polished local minimum with its geometry diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub a: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub min_hess_eig: f64,
    /// Shift of the nearest signed truncation, per axis, in the symmetric
    /// range around zero.
    pub nearest_shift: (i64, i64),
    pub nearest_sign: f64,
    pub angular_distance: f64,
}

/// Minima sorted by ascending gradient norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub lambda: f64,
    pub points: Vec<CriticalPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSample {
    pub report: CriticalPointReport,
    /// All grid evaluations in grid order.
    pub grid: Vec<SamplePoint>,
    /// Seeded polishes that missed the gradient tolerance.
    pub unconverged: usize,
    /// Converged points discarded for failing the curvature bar.
    pub rejected: usize,
}

/// Icosahedron refined `r` times; returns unit vertices and triangle faces.
fn icosphere(r: usize) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let t = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let raw: [[f64; 3]; 12] = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut verts: Vec<[f64; 3]> = raw.iter().map(|v| normalize3(*v)).collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..r {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for e in 0..3 {
                let (i, j) = (f[e], f[(e + 1) % 3]);
                let key = (i.min(j), i.max(j));
                mid[e] = *midpoint.entry(key).or_insert_with(|| {
                    let (a, b) = (verts[i], verts[j]);
                    verts.push(normalize3([a[0] + b[0], a[1] + b[1], a[2] + b[2]]));
                    verts.len() - 1
                });
            }
            next.push([f[0], mid[0], mid[2]]);
            next.push([f[1], mid[1], mid[0]]);
            next.push([f[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        faces = next;
    }
    (verts, faces)
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn neighbor_lists(n: usize, faces: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let mut nbrs = vec![Vec::new(); n];
    for f in faces {
        for e in 0..3 {
            let (i, j) = (f[e], f[(e + 1) % 3]);
            nbrs[i].push(j);
            nbrs[j].push(i);
        }
    }
    for l in &mut nbrs {
        l.sort_unstable();
        l.dedup();
    }
    nbrs
}

fn unit_kernel(v: Vec<f64>, dims: Dims) -> Result<Kernel> {
    Kernel::project_new(v, dims, NormConstraint::L2Sphere)
}

fn angle(p: &[f64], q: &[f64]) -> f64 {
    linalg::dot(p, q).clamp(-1.0, 1.0).acos()
}

/// All nonzero signed shift truncations of `a0` embedded in `m`, labeled by
/// their per-axis shift in the symmetric range.
fn truncation_set(a0: &Kernel, m: Dims) -> Result<Vec<((i64, i64), Kernel)>> {
    let mut out = Vec::new();
    match (a0.dims(), m) {
        (Dims::One(k), Dims::One(_)) => {
            let r = k as i64 - 1;
            for tau in -r..=r {
                match shift_truncation(a0, Shift::One(tau), m) {
                    Ok(t) => out.push(((tau, 0), t)),
                    Err(SbdError::ZeroTruncation { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        (Dims::Two(k1, k2), Dims::Two(..)) => {
            let (r1, r2) = (k1 as i64 - 1, k2 as i64 - 1);
            for t1 in -r1..=r1 {
                for t2 in -r2..=r2 {
                    match shift_truncation(a0, Shift::Two(t1, t2), m) {
                        Ok(t) => out.push(((t1, t2), t)),
                        Err(SbdError::ZeroTruncation { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        (a, b) => {
            return Err(SbdError::DimMismatch(format!("kernel {a:?} vs signal {b:?}")));
        }
    }
    Ok(out)
}

fn nearest_truncation(a: &[f64], truncs: &[((i64, i64), Kernel)]) -> ((i64, i64), f64, f64) {
    let mut best = ((0, 0), 1.0, f64::INFINITY);
    for (shift, t) in truncs {
        for sign in [1.0, -1.0] {
            let c = sign * linalg::dot(a, t.as_slice());
            let d = c.clamp(-1.0, 1.0).acos();
            if d < best.2 {
                best = (*shift, sign, d);
            }
        }
    }
    best
}

struct Polished {
    a: Kernel,
    value: f64,
    grad_norm: f64,
    warm: Signal,
}

/// Armijo descent on the marginal objective from one start. `Ok(None)`
/// means the budget ran out before the tolerance; inner-solver exhaustion
/// is treated the same way, every other error propagates.
fn polish(
    start: &Kernel,
    y: &Signal,
    penalty: &Penalty,
    icfg: &InnerConfig,
    iters: usize,
    grad_tol: f64,
) -> Result<Option<Polished>> {
    let mut a = start.clone();
    let mut warm: Option<Signal> = None;
    for _ in 0..iters {
        let g = match phi_gradient(&a, y, penalty, icfg, warm.as_ref()) {
            Ok(g) => g,
            Err(SbdError::InnerNoConvergence { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let gn = linalg::nrm2(&g.riem_grad);
        if gn <= grad_tol {
            return Ok(Some(Polished { a, value: g.value, grad_norm: gn, warm: g.x_star.x_star }));
        }
        let mut step = 1.0_f64;
        let mut moved = false;
        while step >= MIN_STEP {
            let cand: Vec<f64> = a
                .as_slice()
                .iter()
                .zip(&g.riem_grad)
                .map(|(ai, gi)| ai - step * gi)
                .collect();
            let cand = unit_kernel(cand, a.dims())?;
            let f = match phi(&cand, y, penalty, icfg, Some(&g.x_star.x_star)) {
                Ok(f) => f,
                Err(SbdError::InnerNoConvergence { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            if f <= g.value - ARMIJO_C * step * gn * gn {
                a = cand;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            // Line search bottomed out: numerically stationary but above
            // the tolerance, so the point is not certified.
            return Ok(None);
        }
        warm = Some(g.x_star.x_star);
    }
    Ok(None)
}

/// Smallest eigenvalue of the tangent Hessian at `a`, estimated from value
/// second differences along the renormalization retraction (second order
/// on the l2 sphere, so the estimate is consistent).
fn min_tangent_hessian_eig(
    a: &Kernel,
    y: &Signal,
    penalty: &Penalty,
    icfg: &InnerConfig,
    warm: &Signal,
) -> Result<f64> {
    let k = a.len();
    let av = a.as_slice();

    // Orthonormal tangent basis from projected coordinate directions.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k - 1);
    for i in 0..k {
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        let c = linalg::dot(&v, av);
        for (vj, aj) in v.iter_mut().zip(av) {
            *vj -= c * aj;
        }
        for b in &basis {
            let c = linalg::dot(&v, b);
            for (vj, bj) in v.iter_mut().zip(b) {
                *vj -= c * bj;
            }
        }
        let n = linalg::nrm2(&v);
        if n > 1e-8 {
            linalg::scale(&mut v, 1.0 / n);
            basis.push(v);
        }
        if basis.len() == k - 1 {
            break;
        }
    }

    let eval = |dir: &[f64], t: f64| -> Result<f64> {
        let v: Vec<f64> = av.iter().zip(dir).map(|(ai, di)| ai + t * di).collect();
        phi(&unit_kernel(v, a.dims())?, y, penalty, icfg, Some(warm))
    };
    let f0 = phi(a, y, penalty, icfg, Some(warm))?;
    let quad_form = |dir: &[f64]| -> Result<f64> {
        Ok((eval(dir, FD_STEP)? + eval(dir, -FD_STEP)? - 2.0 * f0) / (FD_STEP * FD_STEP))
    };

    let n = basis.len();
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = quad_form(&basis[i])?;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mixed: Vec<f64> = basis[i]
                .iter()
                .zip(&basis[j])
                .map(|(u, v)| (u + v) / 2.0_f64.sqrt())
                .collect();
            let q = quad_form(&mixed)?;
            let hij = q - 0.5 * (h[i * n + i] + h[j * n + j]);
            h[i * n + j] = hij;
            h[j * n + i] = hij;
        }
    }
    let eig = linalg::symmetric_eigen(&h, n, 1e-12);
    Ok(eig.values[0])
}

/// Samples the marginal objective of `y = a0 (*) x0` over the kernel
/// sphere, polishes grid-local minima, and reports the certified ones with
/// their distance to the nearest signed shift truncation of `a0`.
pub fn landscape_sample(
    a0: &Kernel,
    x0: &Signal,
    cfg: &LandscapeSampleConfig,
) -> Result<LandscapeSample> {
    cfg.validate()?;
    if !a0.dims().fits_in(&x0.dims()) {
        return Err(SbdError::DimMismatch(format!(
            "kernel {:?} does not fit in {:?}",
            a0.dims(),
            x0.dims()
        )));
    }
    let y = circ_conv(a0, x0)?;
    let penalty = cfg.penalty()?;
    let grid_icfg = InnerConfig::with_tol(1e-9);
    let fine_icfg = InnerConfig::with_tol(1e-11);
    let dims = a0.dims();

    // Grid points plus, in grid mode, the neighbor graph.
    let (points, neighbors): (Vec<Vec<f64>>, Option<Vec<Vec<usize>>>) = match cfg.mode {
        SampleMode::Icosphere { refinements } => {
            if dims != Dims::One(3) {
                return Err(SbdError::Unsupported(format!(
                    "the icosphere grid needs a length-3 kernel, got {dims:?}"
                )));
            }
            let (verts, faces) = icosphere(refinements);
            let nbrs = neighbor_lists(verts.len(), &faces);
            (verts.into_iter().map(|v| v.to_vec()).collect(), Some(nbrs))
        }
        SampleMode::Random { count, seed } => {
            let mut rng = rng_from(substream(seed, "landscape-sample"));
            let pts = (0..count).map(|_| unit_sphere_vec(&mut rng, dims.len())).collect();
            (pts, None)
        }
    };

    let values: Vec<Result<f64>> = par_map(&points, |p| {
        phi(&unit_kernel(p.clone(), dims)?, &y, &penalty, &grid_icfg, None)
    });
    let mut grid = Vec::with_capacity(points.len());
    for (p, v) in points.iter().zip(values) {
        grid.push(SamplePoint { a: p.clone(), value: v? });
    }

    // Candidate starts: strict grid-local minima, or every point when
    // there is no neighbor graph.
    let candidates: Vec<usize> = match &neighbors {
        Some(nbrs) => (0..grid.len())
            .filter(|&i| nbrs[i].iter().all(|&j| grid[i].value < grid[j].value))
            .collect(),
        None => (0..grid.len()).collect(),
    };

    let polished: Vec<Result<Option<Polished>>> = par_map(&candidates, |&i| {
        let start = unit_kernel(grid[i].a.clone(), dims)?;
        polish(&start, &y, &penalty, &fine_icfg, cfg.polish_iters, cfg.grad_tol)
    });

    let mut converged: Vec<Polished> = Vec::new();
    let mut unconverged = 0usize;
    for p in polished {
        match p? {
            Some(p) => converged.push(p),
            None => unconverged += 1,
        }
    }

    // Dedupe by angle, keeping the lower value. Antipodes stay distinct.
    converged.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut kept: Vec<Polished> = Vec::new();
    for p in converged {
        if kept.iter().all(|q| angle(p.a.as_slice(), q.a.as_slice()) > cfg.dedupe_angle) {
            kept.push(p);
        }
    }

    let truncs = truncation_set(a0, x0.dims())?;
    let mut rejected = 0usize;
    let mut report_points = Vec::new();
    for p in kept {
        let eig = min_tangent_hessian_eig(&p.a, &y, &penalty, &fine_icfg, &p.warm)?;
        if eig < -CURVATURE_TOL {
            rejected += 1;
            continue;
        }
        let (shift, sign, dist) = nearest_truncation(p.a.as_slice(), &truncs);
        report_points.push(CriticalPoint {
            a: p.a.as_slice().to_vec(),
            value: p.value,
            grad_norm: p.grad_norm,
            min_hess_eig: eig,
            nearest_shift: shift,
            nearest_sign: sign,
            angular_distance: dist,
        });
    }
    report_points.sort_by(|a, b| a.grad_norm.total_cmp(&b.grad_norm));

    Ok(LandscapeSample {
        report: CriticalPointReport { lambda: cfg.lambda, points: report_points },
        grid,
        unconverged,
        rejected,
    })
}

/// CSV rendering of a value grid: one row per point, coordinate columns
/// then the value, in grid order.
pub fn grid_to_csv(grid: &[SamplePoint]) -> String {
    let mut out = String::new();
    if let Some(first) = grid.first() {
        for i in 0..first.a.len() {
            out.push_str(&format!("a{i},"));
        }
        out.push_str("value\n");
    }
    for p in grid {
        for c in &p.a {
            out.push_str(&format!("{c},"));
        }
        out.push_str(&format!("{}\n", p.value));
    }
    out
}

/// One barycentric grid point on the positive face of the l1 sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint {
    pub weights: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexSample {
    /// Lexicographic barycentric grid at the requested resolution.
    pub points: Vec<SimplexPoint>,
    /// Index of the grid-global minimum.
    pub global_min: usize,
    /// Strict grid-local minima under single-unit mass moves.
    pub local_min_indices: Vec<usize>,
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            let mut c = Vec::with_capacity(parts);
            c.push(first);
            c.append(&mut rest);
            out.push(c);
        }
    }
    out
}

/// Evaluates the same marginal objective with the kernel constrained to
/// the positive face of the l1 sphere, on the barycentric grid with
/// `resolution` subdivisions per edge. Neighbors differ by moving one unit
/// of mass between two coordinates.
pub fn simplex_sample(
    y: &Signal,
    k: usize,
    lambda: f64,
    resolution: usize,
) -> Result<SimplexSample> {
    if !(lambda > 0.0) {
        return Err(SbdError::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
    }
    if k < 2 || resolution == 0 {
        return Err(SbdError::InvalidArgument(
            "simplex sampling needs k >= 2 and a positive resolution".into(),
        ));
    }
    let dims = Dims::One(k);
    if !dims.fits_in(&y.dims()) {
        return Err(SbdError::DimMismatch(format!(
            "kernel {dims:?} does not fit in {:?}",
            y.dims()
        )));
    }
    let penalty = Penalty::l1(lambda)?;
    let icfg = InnerConfig::with_tol(1e-10);

    let coords = compositions(resolution, k);
    let index: HashMap<Vec<usize>, usize> =
        coords.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();

    let values: Vec<Result<f64>> = par_map(&coords, |c| {
        let w: Vec<f64> = c.iter().map(|&ci| ci as f64 / resolution as f64).collect();
        let a = Kernel::new(w, dims, NormConstraint::None)?;
        phi(&a, y, &penalty, &icfg, None)
    });
    let mut points = Vec::with_capacity(coords.len());
    for (c, v) in coords.iter().zip(values) {
        let w: Vec<f64> = c.iter().map(|&ci| ci as f64 / resolution as f64).collect();
        points.push(SimplexPoint { weights: w, value: v? });
    }

    let global_min = (0..points.len())
        .min_by(|&i, &j| points[i].value.total_cmp(&points[j].value))
        .expect("nonempty grid");

    let mut local_min_indices = Vec::new();
    'outer: for (i, c) in coords.iter().enumerate() {
        for from in 0..k {
            if c[from] == 0 {
                continue;
            }
            for to in 0..k {
                if to == from {
                    continue;
                }
                let mut n = c.clone();
                n[from] -= 1;
                n[to] += 1;
                if points[index[&n]].value <= points[i].value {
                    continue 'outer;
                }
            }
        }
        local_min_indices.push(i);
    }

    Ok(SimplexSample { points, global_min, local_min_indices })
}
