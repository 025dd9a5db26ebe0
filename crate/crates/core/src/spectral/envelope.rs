use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum grid span, in units of the envelope's time scale.
pub const MIN_SPAN_TAU: f64 = 40.0;

/// Uniform sampling of a one-dimensional complex amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexEnvelope {
    /// Time of the first sample, ns.
    pub t0: f64,
    /// Sample spacing, ns.
    pub dt_step: f64,
    pub samples: Vec<Complex64>,
    /// Characteristic time (the coherence time) the grid was built for, ns.
    pub time_scale: f64,
}

/// Grid description: `n` samples spanning `span_tau * tau`, centred on zero
/// and offset by half a step so that no sample falls on `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n: usize,
    pub span_tau: f64,
    pub tau: f64,
}

impl TimeGrid {
    pub fn new(n: usize, span_tau: f64, tau: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("grid_size", "need at least two samples"));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid("tau", "must be > 0"));
        }
        if span_tau.is_nan() || span_tau < MIN_SPAN_TAU {
            return Err(Error::SpanTooShort {
                span: span_tau * tau,
                required: MIN_SPAN_TAU * tau,
            });
        }
        Ok(Self { n, span_tau, tau })
    }

    /// 2^16 samples over [-80 tau, 80 tau].
    pub fn default_for(tau: f64) -> Self {
        Self {
            n: 1 << 16,
            span_tau: 160.0,
            tau,
        }
    }

    pub fn dt_step(&self) -> f64 {
        self.span_tau * self.tau / self.n as f64
    }

    pub fn t0(&self) -> f64 {
        -0.5 * self.span_tau * self.tau + 0.5 * self.dt_step()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let (t0, h) = (self.t0(), self.dt_step());
        (0..self.n).map(move |k| t0 + k as f64 * h)
    }
}

impl ComplexEnvelope {
    pub fn new(t0: f64, dt_step: f64, samples: Vec<Complex64>, time_scale: f64) -> Result<Self> {
        if !(dt_step.is_finite() && dt_step > 0.0) {
            return Err(Error::invalid(
                "dt_step",
                format!("must be > 0, got {dt_step}"),
            ));
        }
        if samples.len() < 2 {
            return Err(Error::invalid("samples", "need at least two samples"));
        }
        if !(time_scale.is_finite() && time_scale > 0.0) {
            return Err(Error::invalid("time_scale", "must be > 0"));
        }
        let span = dt_step * samples.len() as f64;
        if span < MIN_SPAN_TAU * time_scale * (1.0 - 1e-12) {
            return Err(Error::SpanTooShort {
                span,
                required: MIN_SPAN_TAU * time_scale,
            });
        }
        Ok(Self {
            t0,
            dt_step,
            samples,
            time_scale,
        })
    }

    /// Samples `f` on `grid`.
    pub fn sample(grid: &TimeGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let samples = grid.times().map(f).collect();
        Self {
            t0: grid.t0(),
            dt_step: grid.dt_step(),
            samples,
            time_scale: grid.tau,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt_step
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn span(&self) -> f64 {
        self.dt_step * self.len() as f64
    }

    /// Nyquist frequency of the grid, GHz.
    pub fn nyquist_ghz(&self) -> f64 {
        0.5 / self.dt_step
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.norm_sqr()).collect()
    }

    /// `sum |s|^2 dt`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() * self.dt_step
    }

    /// Scaled copy with unit energy.
    pub fn normalized(&self) -> Self {
        let e = self.energy();
        let k = if e > 0.0 { 1.0 / e.sqrt() } else { 1.0 };
        Self {
            samples: self.samples.iter().map(|s| s * k).collect(),
            ..self.clone()
        }
    }

    /// The same amplitude expressed in `-t`: samples reversed, grid mirrored.
    pub fn time_reversed(&self) -> Self {
        let n = self.len();
        let mut samples = self.samples.clone();
        samples.reverse();
        Self {
            t0: -(self.t0 + (n - 1) as f64 * self.dt_step),
            samples,
            ..self.clone()
        }
    }

    /// Linear interpolation of the amplitude; zero outside the grid.
    pub fn interpolate(&self, t: f64) -> Complex64 {
        let u = (t - self.t0) / self.dt_step;
        if u < 0.0 || u > (self.len() - 1) as f64 {
            return Complex64::new(0.0, 0.0);
        }
        let k = (u.floor() as usize).min(self.len() - 2);
        let f = u - k as f64;
        self.samples[k] * (1.0 - f) + self.samples[k + 1] * f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_symmetric_and_skips_zero() {
        let g = TimeGrid::default_for(5.9);
        let times: Vec<f64> = g.times().collect();
        assert_eq!(times.len(), 1 << 16);
        assert!((times[0] + times[times.len() - 1]).abs() < 1e-9);
        assert!(times.iter().all(|&t| t != 0.0));
        assert!(g.dt_step() <= 5.9 / 20.0);
    }

    #[test]
    fn short_span_rejected() {
        assert!(TimeGrid::new(1024, 20.0, 5.9).is_err());
        let s = vec![Complex64::new(1.0, 0.0); 64];
        assert!(ComplexEnvelope::new(0.0, 0.1, s.clone(), 5.9).is_err());
        assert!(ComplexEnvelope::new(0.0, 4.0, s, 5.9).is_ok());
        assert!(ComplexEnvelope::new(0.0, 1.0, vec![Complex64::new(0.0, 0.0)], 0.01).is_err());
        assert!(ComplexEnvelope::new(0.0, 0.0, vec![Complex64::new(0.0, 0.0); 4], 0.01).is_err());
    }

    #[test]
    fn reversal_round_trip() {
        let g = TimeGrid::new(256, 40.0, 1.0).unwrap();
        let env = ComplexEnvelope::sample(&g, |t| Complex64::new(t, t * t));
        let r = env.time_reversed();
        assert!((r.t0 - env.t0).abs() < 1e-12);
        for k in 0..env.len() {
            let t = env.time(k);
            let v = r.interpolate(-t);
            assert!((v - env.samples[k]).norm() < 1e-9);
        }
        assert_eq!(r.time_reversed(), env);
    }

    #[test]
    fn normalisation() {
        let g = TimeGrid::new(512, 40.0, 1.0).unwrap();
        let env = ComplexEnvelope::sample(&g, |t| Complex64::new((-t * t).exp() * 3.0, 0.0));
        assert!((env.normalized().energy() - 1.0).abs() < 1e-12);
    }
}
