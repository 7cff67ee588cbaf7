//! Circular convolution and its adjoint (cross-correlation).
//!
//! Conventions, with all indices cyclic:
//!
//! ```text
//! conv(a, x)[i] = sum_j a[j] x[i - j]        (kernel on the leading window)
//! corr(a, y)[i] = sum_j a[j] y[j + i]        (adjoint: <conv(a,x), y> = <x, corr(a,y)>)
//! ```
//!
//! Two implementations sit behind one contract: direct O(mk) loops, and an
//! FFT path for windows too wide for the direct loops to win. Both agree to
//! 1e-10 relative error and the dispatch depends only on the sizes, so
//! results are reproducible run to run.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, SbdError};
use crate::signal::{wrap, Dims, Kernel, Signal};

/// FFT wins once the window is wider than a few multiples of log2(m).
fn use_fft(m: usize, k: usize) -> bool {
    m >= 256 && (k as f64) > 4.0 * (m as f64).log2()
}

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        cell.borrow_mut()
            .entry((len, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

/// In-place FFT over the (possibly 2D) grid; 2D runs rows then columns.
fn fft_grid(buf: &mut [Complex<f64>], dims: Dims, inverse: bool) {
    match dims {
        Dims::One(m) => plan(m, inverse).process(buf),
        Dims::Two(m1, m2) => {
            let row = plan(m2, inverse);
            for r in 0..m1 {
                row.process(&mut buf[r * m2..(r + 1) * m2]);
            }
            let col = plan(m1, inverse);
            let mut tmp = vec![Complex::new(0.0, 0.0); m1];
            for c in 0..m2 {
                for r in 0..m1 {
                    tmp[r] = buf[r * m2 + c];
                }
                col.process(&mut tmp);
                for r in 0..m1 {
                    buf[r * m2 + c] = tmp[r];
                }
            }
        }
    }
}

fn to_complex_embedded(a: &[f64], ka: Dims, m: Dims) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); m.len()];
    match (ka, m) {
        (Dims::One(k), Dims::One(_)) => {
            for j in 0..k {
                out[j] = Complex::new(a[j], 0.0);
            }
        }
        (Dims::Two(k1, k2), Dims::Two(_, m2)) => {
            for j1 in 0..k1 {
                for j2 in 0..k2 {
                    out[j1 * m2 + j2] = Complex::new(a[j1 * k2 + j2], 0.0);
                }
            }
        }
        _ => unreachable!("rank checked by caller"),
    }
    out
}

fn to_complex(x: &[f64]) -> Vec<Complex<f64>> {
    x.iter().map(|&v| Complex::new(v, 0.0)).collect()
}

pub(crate) fn circ_conv_direct(a: &[f64], ka: Dims, x: &[f64], m: Dims, out: &mut [f64]) {
    match (ka, m) {
        (Dims::One(k), Dims::One(mm)) => {
            out.fill(0.0);
            // out[i] += a[j] x[i - j]; accumulate per kernel tap to keep the
            // inner loop contiguous in x.
            for j in 0..k {
                let aj = a[j];
                if aj == 0.0 {
                    continue;
                }
                // i - j >= 0 for i in j..mm, wraps for i in 0..j.
                for i in j..mm {
                    out[i] += aj * x[i - j];
                }
                for i in 0..j {
                    out[i] += aj * x[i + mm - j];
                }
            }
        }
        (Dims::Two(k1, k2), Dims::Two(m1, m2)) => {
            out.fill(0.0);
            for j1 in 0..k1 {
                for j2 in 0..k2 {
                    let aj = a[j1 * k2 + j2];
                    if aj == 0.0 {
                        continue;
                    }
                    for i1 in 0..m1 {
                        let s1 = wrap(i1 as i64 - j1 as i64, m1);
                        for i2 in 0..m2 {
                            let s2 = wrap(i2 as i64 - j2 as i64, m2);
                            out[i1 * m2 + i2] += aj * x[s1 * m2 + s2];
                        }
                    }
                }
            }
        }
        _ => unreachable!("rank checked by caller"),
    }
}

pub(crate) fn circ_conv_fft(a: &[f64], ka: Dims, x: &[f64], m: Dims, out: &mut [f64]) {
    let mut fa = to_complex_embedded(a, ka, m);
    let mut fx = to_complex(x);
    fft_grid(&mut fa, m, false);
    fft_grid(&mut fx, m, false);
    for (u, v) in fx.iter_mut().zip(&fa) {
        *u *= v;
    }
    fft_grid(&mut fx, m, true);
    let scale = 1.0 / m.len() as f64;
    for (o, u) in out.iter_mut().zip(&fx) {
        *o = u.re * scale;
    }
}

/// `out[i] = sum_j a[j] y[j + i]` for `i` over the output window `ko`
/// (either the full torus or just the leading kernel window).
pub(crate) fn corr_direct(a: &[f64], ka: Dims, y: &[f64], m: Dims, ko: Dims, out: &mut [f64]) {
    match (ka, m, ko) {
        (Dims::One(k), Dims::One(mm), Dims::One(ko1)) => {
            for i in 0..ko1 {
                let mut s = 0.0;
                // j + i < mm for j < mm - i, wraps afterwards.
                let split = k.min(mm - i);
                for j in 0..split {
                    s += a[j] * y[j + i];
                }
                for j in split..k {
                    s += a[j] * y[j + i - mm];
                }
                out[i] = s;
            }
        }
        (Dims::Two(k1, k2), Dims::Two(m1, m2), Dims::Two(o1, o2)) => {
            for i1 in 0..o1 {
                for i2 in 0..o2 {
                    let mut s = 0.0;
                    for j1 in 0..k1 {
                        let t1 = wrap(j1 as i64 + i1 as i64, m1);
                        for j2 in 0..k2 {
                            let t2 = wrap(j2 as i64 + i2 as i64, m2);
                            s += a[j1 * k2 + j2] * y[t1 * m2 + t2];
                        }
                    }
                    out[i1 * o2 + i2] = s;
                }
            }
        }
        _ => unreachable!("rank checked by caller"),
    }
}

pub(crate) fn corr_fft(a: &[f64], ka: Dims, y: &[f64], m: Dims, ko: Dims, out: &mut [f64]) {
    let mut fa = to_complex_embedded(a, ka, m);
    let mut fy = to_complex(y);
    fft_grid(&mut fa, m, false);
    fft_grid(&mut fy, m, false);
    for (u, v) in fy.iter_mut().zip(&fa) {
        *u *= v.conj();
    }
    fft_grid(&mut fy, m, true);
    let scale = 1.0 / m.len() as f64;
    match (m, ko) {
        (Dims::One(_), Dims::One(o)) => {
            for i in 0..o {
                out[i] = fy[i].re * scale;
            }
        }
        (Dims::Two(_, m2), Dims::Two(o1, o2)) => {
            for i1 in 0..o1 {
                for i2 in 0..o2 {
                    out[i1 * o2 + i2] = fy[i1 * m2 + i2].re * scale;
                }
            }
        }
        _ => unreachable!("rank checked by caller"),
    }
}

/// Raw convolution with automatic path selection and caller-owned output.
pub(crate) fn circ_conv_raw(a: &[f64], ka: Dims, x: &[f64], m: Dims, out: &mut [f64]) {
    debug_assert_eq!(x.len(), m.len());
    debug_assert_eq!(out.len(), m.len());
    if use_fft(m.len(), ka.len()) {
        circ_conv_fft(a, ka, x, m, out);
    } else {
        circ_conv_direct(a, ka, x, m, out);
    }
}

pub(crate) fn corr_raw(a: &[f64], ka: Dims, y: &[f64], m: Dims, ko: Dims, out: &mut [f64]) {
    debug_assert_eq!(y.len(), m.len());
    debug_assert_eq!(out.len(), ko.len());
    // The FFT path always produces the full grid; only worth it when the
    // output window is not much smaller than the work saved.
    if use_fft(m.len(), ka.len().min(4 * ko.len())) {
        corr_fft(a, ka, y, m, ko, out);
    } else {
        corr_direct(a, ka, y, m, ko, out);
    }
}

fn check_ranks(ka: Dims, m: Dims) -> Result<()> {
    if !ka.fits_in(&m) {
        return Err(SbdError::DimMismatch(format!(
            "kernel {ka:?} does not fit in signal {m:?}"
        )));
    }
    Ok(())
}

/// Circular convolution `a (*) x` on the torus of `x`.
pub fn circ_conv(a: &Kernel, x: &Signal) -> Result<Signal> {
    check_ranks(a.dims(), x.dims())?;
    let mut out = vec![0.0; x.len()];
    circ_conv_raw(a.as_slice(), a.dims(), x.as_slice(), x.dims(), &mut out);
    Signal::new(out, x.dims())
}

/// Circular convolution of two same-size signals (kernel window = torus).
pub fn circ_conv_full(v: &Signal, x: &Signal) -> Result<Signal> {
    if v.dims() != x.dims() {
        return Err(SbdError::DimMismatch(format!(
            "{:?} vs {:?}",
            v.dims(),
            x.dims()
        )));
    }
    let mut out = vec![0.0; x.len()];
    circ_conv_raw(v.as_slice(), v.dims(), x.as_slice(), x.dims(), &mut out);
    Signal::new(out, x.dims())
}

/// Cross-correlation of the kernel window against `y`, full-length output.
/// This is the adjoint of `x -> circ_conv(a, x)`.
pub fn corr(a: &Kernel, y: &Signal) -> Result<Signal> {
    check_ranks(a.dims(), y.dims())?;
    let mut out = vec![0.0; y.len()];
    corr_raw(a.as_slice(), a.dims(), y.as_slice(), y.dims(), y.dims(), &mut out);
    Signal::new(out, y.dims())
}

/// Leading `k` window of the cross-correlation of two full signals:
/// `out[i] = <shift_i(v), y>`. This is the adjoint of `a -> circ_conv(inject(a), x)`
/// restricted to the kernel window, i.e. the kernel-side gradient block.
pub fn corr_window(v: &Signal, y: &Signal, k: Dims) -> Result<Vec<f64>> {
    if v.dims() != y.dims() {
        return Err(SbdError::DimMismatch(format!(
            "{:?} vs {:?}",
            v.dims(),
            y.dims()
        )));
    }
    if !k.fits_in(&v.dims()) {
        return Err(SbdError::DimMismatch(format!(
            "window {k:?} does not fit in {:?}",
            v.dims()
        )));
    }
    let mut out = vec![0.0; k.len()];
    corr_raw(v.as_slice(), v.dims(), y.as_slice(), y.dims(), k, &mut out);
    Ok(out)
}
