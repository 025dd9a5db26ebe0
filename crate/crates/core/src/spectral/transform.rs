//! Discrete Fourier transform of sampled envelopes.
//!
//! Forward: `S(w_k) = dt * sum_n f(t_n) exp(+i w_k t_n)`, which approximates
//! the continuous `integral f(t) exp(+i w t) dt`. The inverse undoes it exactly.
//! Frequencies follow the usual FFT ordering (non-negative first).

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::envelope::ComplexEnvelope;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Angular frequencies, rad/ns.
    pub omega: Vec<f64>,
    pub values: Vec<Complex64>,
    pub t0: f64,
    pub dt_step: f64,
    pub time_scale: f64,
}

/// Angular frequency grid of an `n`-point transform with spacing `dt_step`.
pub fn angular_frequencies(n: usize, dt_step: f64) -> Vec<f64> {
    let dw = 2.0 * PI / (n as f64 * dt_step);
    (0..n)
        .map(|k| {
            let k = if k < n.div_ceil(2) {
                k as f64
            } else {
                k as f64 - n as f64
            };
            k * dw
        })
        .collect()
}

fn check_len(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(())
}

/// Unnormalised in-place transform: `Positive` is the `e^{+i}` kernel.
pub(crate) fn fft_in_place(buf: &mut [Complex64], positive_kernel: bool) {
    let dir = if positive_kernel {
        FftDirection::Inverse
    } else {
        FftDirection::Forward
    };
    let fft = FftPlanner::new().plan_fft(buf.len(), dir);
    fft.process(buf);
}

pub fn forward(env: &ComplexEnvelope) -> Result<Spectrum> {
    let n = env.len();
    check_len(n)?;
    let mut buf = env.samples.clone();
    fft_in_place(&mut buf, true);
    let omega = angular_frequencies(n, env.dt_step);
    for (v, &w) in buf.iter_mut().zip(&omega) {
        *v *= Complex64::from_polar(env.dt_step, w * env.t0);
    }
    Ok(Spectrum {
        omega,
        values: buf,
        t0: env.t0,
        dt_step: env.dt_step,
        time_scale: env.time_scale,
    })
}

pub fn inverse(spec: &Spectrum) -> Result<ComplexEnvelope> {
    let n = spec.values.len();
    check_len(n)?;
    let mut buf: Vec<Complex64> = spec
        .values
        .iter()
        .zip(&spec.omega)
        .map(|(v, &w)| v * Complex64::from_polar(1.0 / spec.dt_step, -w * spec.t0))
        .collect();
    fft_in_place(&mut buf, false);
    let scale = 1.0 / n as f64;
    for v in &mut buf {
        *v *= scale;
    }
    Ok(ComplexEnvelope {
        t0: spec.t0,
        dt_step: spec.dt_step,
        samples: buf,
        time_scale: spec.time_scale,
    })
}

/// Forward transform together with its inverse, for round-trip checks.
pub fn transform_pair(env: &ComplexEnvelope) -> Result<(Spectrum, ComplexEnvelope)> {
    let s = forward(env)?;
    let back = inverse(&s)?;
    Ok((s, back))
}
