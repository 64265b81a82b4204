//! Real FFT kernels along the last axis, built on `rustfft`.
//!
//! Spectra are stored as `[..., bins, 2]` with `(re, im)` pairs, where
//! `bins = n / 2 + 1`. The inverse follows the usual Hermitian convention:
//! the imaginary parts of the DC bin and (for even `n`) the Nyquist bin are
//! ignored.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

pub fn bins(n: usize) -> usize {
    n / 2 + 1
}

/// Multiplicity of bin `k` in the full Hermitian spectrum of length `n`.
fn multiplicity(k: usize, n: usize) -> f64 {
    if k == 0 || (n % 2 == 0 && k == n / 2) {
        1.0
    } else {
        2.0
    }
}

/// `x`: `rows` contiguous signals of length `n`. Returns `rows * bins * 2`.
pub fn rfft_rows(x: &[f64], n: usize) -> Vec<f64> {
    let rows = x.len() / n;
    let nb = bins(n);
    let plan = forward_plan(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut out = vec![0.0; rows * nb * 2];
    for r in 0..rows {
        for (b, &v) in buf.iter_mut().zip(&x[r * n..(r + 1) * n]) {
            *b = Complex64::new(v, 0.0);
        }
        plan.process(&mut buf);
        for k in 0..nb {
            out[(r * nb + k) * 2] = buf[k].re;
            out[(r * nb + k) * 2 + 1] = buf[k].im;
        }
    }
    out
}

/// Adjoint of [`rfft_rows`]: maps a gradient on the spectrum back to the signal.
pub fn rfft_rows_backward(g: &[f64], n: usize) -> Vec<f64> {
    let nb = bins(n);
    let rows = g.len() / (nb * 2);
    let plan = inverse_plan(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut out = vec![0.0; rows * n];
    for r in 0..rows {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for k in 0..nb {
            buf[k] = Complex64::new(g[(r * nb + k) * 2], g[(r * nb + k) * 2 + 1]);
        }
        // rustfft's inverse is unnormalised: sum_k G_k e^{+i 2 pi k t / n}.
        plan.process(&mut buf);
        for t in 0..n {
            out[r * n + t] = buf[t].re;
        }
    }
    out
}

/// `spec`: `rows * bins * 2`. Returns `rows * n` real samples.
pub fn irfft_rows(spec: &[f64], n: usize) -> Vec<f64> {
    let nb = bins(n);
    let rows = spec.len() / (nb * 2);
    let plan = inverse_plan(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut out = vec![0.0; rows * n];
    let scale = 1.0 / n as f64;
    for r in 0..rows {
        for k in 0..nb {
            let re = spec[(r * nb + k) * 2];
            let im = spec[(r * nb + k) * 2 + 1];
            let self_conjugate = k == 0 || (n % 2 == 0 && k == n / 2);
            buf[k] = if self_conjugate {
                Complex64::new(re, 0.0)
            } else {
                Complex64::new(re, im)
            };
        }
        for k in nb..n {
            buf[k] = buf[n - k].conj();
        }
        plan.process(&mut buf);
        for t in 0..n {
            out[r * n + t] = buf[t].re * scale;
        }
    }
    out
}

/// Adjoint of [`irfft_rows`].
pub fn irfft_rows_backward(g: &[f64], n: usize) -> Vec<f64> {
    let nb = bins(n);
    let rows = g.len() / n;
    let plan = forward_plan(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut out = vec![0.0; rows * nb * 2];
    let scale = 1.0 / n as f64;
    for r in 0..rows {
        for (b, &v) in buf.iter_mut().zip(&g[r * n..(r + 1) * n]) {
            *b = Complex64::new(v, 0.0);
        }
        plan.process(&mut buf);
        for k in 0..nb {
            let c = multiplicity(k, n) * scale;
            let self_conjugate = k == 0 || (n % 2 == 0 && k == n / 2);
            out[(r * nb + k) * 2] = c * buf[k].re;
            out[(r * nb + k) * 2 + 1] = if self_conjugate { 0.0 } else { c * buf[k].im };
        }
    }
    out
}
