//! Small dense linear algebra: vector helpers and a cyclic-Jacobi
//! eigensolver for the symmetric Gram matrices that show up in the
//! landscape checks (all of modest size, so O(n^3) sweeps are fine).

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn nrm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn nrm1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

pub fn nrm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn nrm_q(a: &[f64], q: f64) -> f64 {
    a.iter().map(|x| x.abs().powf(q)).sum::<f64>().powf(1.0 / q)
}

/// a += s * b
pub fn axpy(a: &mut [f64], s: f64, b: &[f64]) {
    debug_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter_mut().zip(b) {
        *x += s * y;
    }
}

pub fn scale(a: &mut [f64], s: f64) {
    for x in a.iter_mut() {
        *x *= s;
    }
}

/// Normalizes to unit l2 norm in place; returns the original norm.
/// Callers must handle the zero case themselves (norm returned as-is).
pub fn normalize_l2(a: &mut [f64]) -> f64 {
    let n = nrm2(a);
    if n > 0.0 {
        scale(a, 1.0 / n);
    }
    n
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column j (i.e. `vectors[i * n + j]` over i) is the eigenvector for
    /// `values[j]`.
    pub vectors: Vec<f64>,
    pub n: usize,
}

impl SymmetricEigen {
    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.vectors[i * self.n + j]).collect()
    }
}

/// Cyclic Jacobi iteration on a symmetric matrix (row-major, n x n).
/// Sweeps until the off-diagonal Frobenius mass drops below `tol` relative
/// to the matrix norm. `tol = 1e-10` reproduces eigenvalues of well-scaled
/// Grams to near machine precision.
pub fn symmetric_eigen(mat: &[f64], n: usize, tol: f64) -> SymmetricEigen {
    assert_eq!(mat.len(), n * n, "matrix must be n x n");
    let mut a = mat.to_vec();
    // Symmetrize defensively; inputs are Grams but may carry roundoff skew.
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = m;
            a[j * n + i] = m;
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
            (2.0 * s).sqrt()
        };
        if off <= tol * frob {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- J^T A J on rows/cols p, q.
                for i in 0..n {
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = a[p * n + j];
                    let aqj = a[q * n + j];
                    a[p * n + j] = c * apj - s * aqj;
                    a[q * n + j] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (jnew, &jold) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + jnew] = v[i * n + jold];
        }
    }
    SymmetricEigen { values, vectors, n }
}

/// Spectral norm of a symmetric matrix: max |eigenvalue|.
pub fn symmetric_operator_norm(mat: &[f64], n: usize) -> f64 {
    let eig = symmetric_eigen(mat, n, 1e-12);
    eig.values
        .iter()
        .fold(0.0_f64, |m, &x| m.max(x.abs()))
}
