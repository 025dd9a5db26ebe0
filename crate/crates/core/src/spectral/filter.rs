use num_complex::Complex64;

use super::cavity::{response, CavityParams, ResponseModel};
use super::envelope::{ComplexEnvelope, TimeGrid};
use super::transform::{angular_frequencies, fft_in_place};
use crate::biphoton::{biphoton_amplitude, BiphotonParams, Mode};
use crate::error::{Error, Result};

/// Largest usable sample spacing in units of the time scale.
pub const MAX_STEP_TAU: f64 = 1.0 / 20.0;

fn check_grid(env: &ComplexEnvelope) -> Result<()> {
    let n = env.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let limit = env.time_scale * MAX_STEP_TAU;
    if env.dt_step > limit * (1.0 + 1e-12) {
        return Err(Error::GridTooCoarse {
            dt_step: env.dt_step,
            limit,
        });
    }
    let required = 40.0 * env.time_scale;
    if env.span() < required * (1.0 - 1e-12) {
        return Err(Error::SpanTooShort {
            span: env.span(),
            required,
        });
    }
    Ok(())
}

/// Reflects `env` off the cavity: inverse transform of `C(w - delta) F[env]`.
///
/// The time axis of `env` is the time of the photon that meets the cavity.
pub fn apply_cavity_filter(
    env: &ComplexEnvelope,
    cavity: &CavityParams,
    model: ResponseModel,
) -> Result<ComplexEnvelope> {
    cavity.validate()?;
    check_grid(env)?;
    let n = env.len();
    let mut buf = env.samples.clone();
    fft_in_place(&mut buf, true);
    for (v, w) in buf.iter_mut().zip(angular_frequencies(n, env.dt_step)) {
        *v *= response(cavity, w - cavity.delta, model);
    }
    fft_in_place(&mut buf, false);
    let scale = 1.0 / n as f64;
    for v in &mut buf {
        *v *= scale;
    }
    Ok(ComplexEnvelope {
        samples: buf,
        ..env.clone()
    })
}

/// Input and filtered pair envelopes, both as functions of `dt = t_i - t_s`.
#[derive(Debug, Clone)]
pub struct FilteredPair {
    pub input: ComplexEnvelope,
    pub output: ComplexEnvelope,
    pub mode: Mode,
}

/// Converts an envelope in `dt` to the time axis of the photon in `mode`
/// (relative to its partner), and back: signal time is `-dt`, idler time is `dt`.
pub fn to_mode_time(env_dt: &ComplexEnvelope, mode: Mode) -> ComplexEnvelope {
    match mode {
        Mode::Signal => env_dt.time_reversed(),
        Mode::Idler => env_dt.clone(),
    }
}

pub fn from_mode_time(env: &ComplexEnvelope, mode: Mode) -> ComplexEnvelope {
    // the mapping is an involution
    to_mode_time(env, mode)
}

/// Discretises the pair amplitude on `grid` and filters the mode `mode`.
pub fn filter_biphoton(
    p: &BiphotonParams,
    cavity: &CavityParams,
    mode: Mode,
    grid: &TimeGrid,
    model: ResponseModel,
) -> Result<FilteredPair> {
    p.validate()?;
    let input = ComplexEnvelope::sample(grid, |t| biphoton_amplitude(p, t));
    let seen = to_mode_time(&input, mode);
    let filtered = apply_cavity_filter(&seen, cavity, model)?;
    Ok(FilteredPair {
        input,
        output: from_mode_time(&filtered, mode),
        mode,
    })
}

/// Fraction of intensity at `dt > 0`.
pub fn side_weight_fraction(env_dt: &ComplexEnvelope) -> f64 {
    let mut pos = 0.0;
    let mut total = 0.0;
    for (k, s) in env_dt.samples.iter().enumerate() {
        let i = s.norm_sqr();
        total += i;
        if env_dt.time(k) > 0.0 {
            pos += i;
        }
    }
    if total > 0.0 {
        pos / total
    } else {
        0.0
    }
}

/// Classical fidelity `(sum sqrt(p q))^2` of the two normalised intensity
/// distributions; 1 for identical shapes.
pub fn intensity_overlap(a: &ComplexEnvelope, b: &ComplexEnvelope) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::BinningMismatch(format!(
            "envelope lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let ea: f64 = a.samples.iter().map(|s| s.norm_sqr()).sum();
    let eb: f64 = b.samples.iter().map(|s| s.norm_sqr()).sum();
    if ea == 0.0 || eb == 0.0 {
        return Ok(0.0);
    }
    let bc: f64 = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| (x.norm_sqr() * y.norm_sqr()).sqrt())
        .sum::<f64>()
        / (ea * eb).sqrt();
    Ok(bc * bc)
}

/// Maximum of `| |env|^2 - |f|^2 |` over the grid, divided by the peak of `|f|^2`.
pub fn max_intensity_error(env: &ComplexEnvelope, f: impl Fn(f64) -> Complex64) -> f64 {
    let mut peak = 0.0f64;
    let mut err = 0.0f64;
    for (k, s) in env.samples.iter().enumerate() {
        let r = f(env.time(k)).norm_sqr();
        peak = peak.max(r);
        err = err.max((s.norm_sqr() - r).abs());
    }
    if peak > 0.0 {
        err / peak
    } else {
        err
    }
}

/// Detuning (rad/ns) in `[lo, hi]` where the filtered side-weight fraction
/// equals one half, by bisection. The fraction must straddle 0.5 on the bracket.
pub fn symmetric_detuning(
    p: &BiphotonParams,
    cavity: &CavityParams,
    grid: &TimeGrid,
    model: ResponseModel,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    let mode = if p.cavity_sees_rising(Mode::Signal) {
        Mode::Signal
    } else {
        Mode::Idler
    };
    let excess = |delta: f64| -> Result<f64> {
        let pair = filter_biphoton(p, &cavity.with_detuning(delta), mode, grid, model)?;
        let f = side_weight_fraction(&pair.output);
        // idler-first pairs put the decaying side at dt < 0
        Ok(match p.ordering {
            crate::biphoton::Ordering::SignalFirst => f - 0.5,
            crate::biphoton::Ordering::IdlerFirst => 0.5 - f,
        })
    };
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (excess(a)?, excess(b)?);
    if fa.signum() == fb.signum() {
        return Err(Error::Validation(format!(
            "side weight does not cross 0.5 on [{lo}, {hi}] rad/ns"
        )));
    }
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let fm = excess(m)?;
        if fm.signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
        if (b - a).abs() < 1e-9 * hi.abs().max(1e-12) {
            break;
        }
    }
    Ok(0.5 * (a + b))
}
