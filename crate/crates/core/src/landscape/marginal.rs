//! The joint objective, its marginalization over the activation, and the
//! smoothed-penalty machinery for the near-flat part of the sphere.

use crate::conv::{circ_conv, corr, corr_raw, corr_window};
use crate::error::{Result, SbdError};
use crate::landscape::{project_out, require_l2_sphere};
use crate::prox::{joint_objective, solve_activation, ActivationSolve, InnerConfig, Penalty};
use crate::signal::{wrap, Dims, Kernel, Signal};
use crate::util::linalg;

/// Joint objective `0.5 ||y - a (*) x||^2 + lambda r(x)`.
pub fn psi(a: &Kernel, x: &Signal, y: &Signal, penalty: &Penalty) -> Result<f64> {
    joint_objective(a, x, y, penalty)
}

/// Marginal objective `phi(a) = min_x psi(a, x)`, evaluated through the
/// activation solver. Inner-solver failures propagate.
pub fn phi(
    a: &Kernel,
    y: &Signal,
    penalty: &Penalty,
    cfg: &InnerConfig,
    warm: Option<&Signal>,
) -> Result<f64> {
    let sol = solve_activation(a, y, penalty, cfg, warm)?;
    joint_objective(a, &sol.x_star, y, penalty)
}

/// Marginal value plus the a-side gradient at the minimizing activation.
#[derive(Debug)]
pub struct MarginalGradient {
    pub value: f64,
    pub x_star: ActivationSolve,
    pub euclid_grad: Vec<f64>,
    pub riem_grad: Vec<f64>,
}

/// Gradient of `phi` where it is differentiable: the activation is held at
/// its optimum, so the gradient is the partial derivative of `psi` in `a`,
/// projected to the sphere tangent space. On the measure-zero set where the
/// support of `x*` changes this is one-sided; descent methods use it as-is.
pub fn phi_gradient(
    a: &Kernel,
    y: &Signal,
    penalty: &Penalty,
    cfg: &InnerConfig,
    warm: Option<&Signal>,
) -> Result<MarginalGradient> {
    require_l2_sphere(a, "kernel")?;
    let sol = solve_activation(a, y, penalty, cfg, warm)?;
    let value = joint_objective(a, &sol.x_star, y, penalty)?;
    let conv = circ_conv(a, &sol.x_star)?;
    let resid: Vec<f64> = conv
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(c, yy)| c - yy)
        .collect();
    let resid = Signal::new(resid, y.dims())?;
    let euclid_grad = corr_window(&sol.x_star, &resid, a.dims())?;
    let riem_grad = project_out(&euclid_grad, a.as_slice());
    Ok(MarginalGradient { value, x_star: sol, euclid_grad, riem_grad })
}

/// Diagnostics for the region where the huber-smoothed activation stays
/// within its quadratic branch everywhere.
#[derive(Clone, Copy, Debug)]
pub struct FlatRegionProbe {
    /// `||x*(a)||_inf <= mu` under the huber penalty.
    pub in_region: bool,
    /// Second-order expansion of the smoothed marginal objective around
    /// `x = 0`; meaningful inside the region, reported always.
    pub approx_value: f64,
    pub x_star_inf: f64,
}

/// Probe the smoothed flat region at `a`. Inside it the activation solve is
/// a ridge problem and the marginal objective is within `O(mu^2/lambda^2)`
/// of `-mu/(2 lambda) ||corr(a, y)||^2 + 0.5 ||y||^2 + mu n / 2`.
pub fn phi_huber_flat_region(
    a: &Kernel,
    y: &Signal,
    lambda: f64,
    mu: f64,
    cfg: &InnerConfig,
) -> Result<FlatRegionProbe> {
    if !(mu < lambda) {
        return Err(SbdError::InvalidArgument(format!(
            "flat-region probe needs mu < lambda, got mu = {mu}, lambda = {lambda}"
        )));
    }
    let penalty = Penalty::huber(lambda, mu)?;
    let sol = solve_activation(a, y, &penalty, cfg, None)?;
    let x_star_inf = sol.x_star.norm_inf();

    let c = corr(a, y)?;
    let c2: f64 = linalg::dot(c.as_slice(), c.as_slice());
    let y2: f64 = linalg::dot(y.as_slice(), y.as_slice());
    let n = y.len() as f64;
    let approx_value = -mu / (2.0 * lambda) * c2 + 0.5 * y2 + mu * n / 2.0;

    Ok(FlatRegionProbe { in_region: x_star_inf <= mu, approx_value, x_star_inf })
}

/// Gram matrix of the cyclic shifts of `y` restricted to the kernel window:
/// `G[p][q] = <shift_p(y), shift_q(y)>` for window offsets `p, q`. Returned
/// row-major with side `k.len()`.
pub fn shift_gram(y: &Signal, k: Dims) -> Result<Vec<f64>> {
    if !k.fits_in(&y.dims()) {
        return Err(SbdError::DimMismatch(format!(
            "kernel window {:?} does not fit in signal {:?}",
            k,
            y.dims()
        )));
    }
    // <shift_p(y), shift_q(y)> depends only on the wrapped lag p - q.
    let mut rho = vec![0.0; y.len()];
    corr_raw(y.as_slice(), y.dims(), y.as_slice(), y.dims(), y.dims(), &mut rho);

    let n = k.len();
    let mut gram = vec![0.0; n * n];
    match (k, y.dims()) {
        (Dims::One(kk), Dims::One(m)) => {
            for i in 0..kk {
                for j in 0..kk {
                    gram[i * n + j] = rho[wrap(i as i64 - j as i64, m)];
                }
            }
        }
        (Dims::Two(k1, k2), Dims::Two(m1, m2)) => {
            for i1 in 0..k1 {
                for i2 in 0..k2 {
                    for j1 in 0..k1 {
                        for j2 in 0..k2 {
                            let r = wrap(i1 as i64 - j1 as i64, m1);
                            let c = wrap(i2 as i64 - j2 as i64, m2);
                            gram[(i1 * k2 + i2) * n + (j1 * k2 + j2)] = rho[r * m2 + c];
                        }
                    }
                }
            }
        }
        _ => unreachable!("fits_in checked rank"),
    }
    Ok(gram)
}

/// Penalty level above which the leading shift-spectrum direction of `y`
/// falls into the smoothed flat region: `sqrt(lambda_max(G) / k)` for the
/// shift Gram matrix `G`. Choosing the starting penalty below this keeps
/// that direction escapable.
pub fn lambda_upper_bound(y: &Signal, k: Dims) -> Result<f64> {
    let gram = shift_gram(y, k)?;
    let n = k.len();
    let eig = linalg::symmetric_eigen(&gram, n, 1e-10);
    let top = eig.values[n - 1].max(0.0);
    Ok((top / n as f64).sqrt())
}
