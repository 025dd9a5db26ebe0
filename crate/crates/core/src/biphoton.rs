//! Closed-form biphoton amplitudes before and after cavity filtering.
//!
//! Every amplitude here is a function of the detection-time difference
//! `dt = t_i - t_s` only, expressed in the rotating frame of each photon's
//! carrier. The two-argument wavefunction is recovered by translation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which photon of the pair is emitted (and detected) first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    #[default]
    SignalFirst,
    IdlerFirst,
}

/// The mode that is coupled to the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Signal,
    Idler,
}

impl Mode {
    pub fn other(self) -> Self {
        match self {
            Mode::Signal => Mode::Idler,
            Mode::Idler => Mode::Signal,
        }
    }
}

/// Weight given to the decaying component of the filtered envelope.
///
/// `TwoDeltaTau` uses `w = 2 delta tau`, `DeltaTau` uses `w = delta tau`
/// with `delta` in rad/ns. The numeric filter selects `DeltaTau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightConvention {
    #[serde(rename = "two_delta_tau")]
    TwoDeltaTau,
    #[default]
    #[serde(rename = "delta_tau")]
    DeltaTau,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiphotonParams {
    pub amplitude: f64,
    /// Coherence time, ns.
    pub tau: f64,
    pub ordering: Ordering,
}

impl BiphotonParams {
    pub fn new(amplitude: f64, tau: f64, ordering: Ordering) -> Result<Self> {
        let p = Self {
            amplitude,
            tau,
            ordering,
        };
        p.validate()?;
        Ok(p)
    }

    /// Source with the measured 5.9 ns coherence time, unit amplitude.
    pub fn measured() -> Self {
        Self {
            amplitude: 1.0,
            tau: 5.9,
            ordering: Ordering::SignalFirst,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::invalid(
                "tau",
                format!("must be > 0, got {}", self.tau),
            ));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::invalid(
                "amplitude",
                format!("must be > 0, got {}", self.amplitude),
            ));
        }
        Ok(())
    }

    /// True when the envelope seen by a cavity in `mode`, in that photon's own
    /// time, is a rising exponential (the cavity sits on the first-emitted mode).
    pub fn cavity_sees_rising(&self, mode: Mode) -> bool {
        matches!(
            (self.ordering, mode),
            (Ordering::SignalFirst, Mode::Signal) | (Ordering::IdlerFirst, Mode::Idler)
        )
    }

    /// `dt` in the frame where the Heaviside gate opens for positive arguments.
    fn gated(&self, dt: f64) -> f64 {
        match self.ordering {
            Ordering::SignalFirst => dt,
            Ordering::IdlerFirst => -dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningParams {
    /// Cavity resonance minus photon carrier, rad/ns.
    pub delta: f64,
    pub convention: WeightConvention,
}

impl DetuningParams {
    pub fn new(delta: f64, convention: WeightConvention) -> Result<Self> {
        if !delta.is_finite() {
            return Err(Error::invalid("delta", "must be finite"));
        }
        Ok(Self { delta, convention })
    }

    pub fn resonant() -> Self {
        Self {
            delta: 0.0,
            convention: WeightConvention::default(),
        }
    }

    pub fn weight(&self, tau: f64) -> f64 {
        match self.convention {
            WeightConvention::TwoDeltaTau => 2.0 * self.delta * tau,
            WeightConvention::DeltaTau => self.delta * tau,
        }
    }
}

/// Fraction of the filtered intensity carried by the decaying side, `w^2 / (1 + w^2)`.
pub fn decaying_side_fraction(d: &DetuningParams, tau: f64) -> f64 {
    let w = d.weight(tau);
    w * w / (1.0 + w * w)
}

/// Time-ordered pair amplitude `A exp(-dt / 2 tau) Theta(dt)`, mirrored for
/// idler-first ordering. `Theta(0) = 1`.
pub fn biphoton_amplitude(p: &BiphotonParams, dt: f64) -> Complex64 {
    let x = p.gated(dt);
    if x >= 0.0 {
        Complex64::new(p.amplitude * (-x / (2.0 * p.tau)).exp(), 0.0)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Filtered envelope with the matched cavity on the first-emitted mode:
///
/// `A / sqrt(1 + w^2) [w exp(-dt/2tau) Theta(dt) + exp(dt/2tau) Theta(-dt)]`
///
/// For `delta = 0` this is the time-reversed input. At `dt = 0` the rising
/// branch is returned.
pub fn filtered_amplitude_analytic(p: &BiphotonParams, d: &DetuningParams, dt: f64) -> Complex64 {
    let x = p.gated(dt);
    let w = d.weight(p.tau);
    let norm = p.amplitude / (1.0 + w * w).sqrt();
    let v = if x > 0.0 {
        w * (-x / (2.0 * p.tau)).exp()
    } else {
        (x / (2.0 * p.tau)).exp()
    };
    Complex64::new(norm * v, 0.0)
}

/// Filtered envelope with the matched cavity on the second-emitted mode. The
/// cavity then sees a decaying exponential and returns
///
/// `A exp(-x/2tau) [1 - (1 - exp(-i d x)) / (i d tau)]`, `x >= 0`
///
/// where `d = w / tau` is the effective detuning for the chosen convention
/// (limit `A exp(-x/2tau)(1 - x/tau)` at resonance).
pub fn filtered_amplitude_swapped(p: &BiphotonParams, d: &DetuningParams, dt: f64) -> Complex64 {
    let x = p.gated(dt);
    if x < 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let tau = p.tau;
    let delta = d.weight(tau) / tau;
    let envelope = p.amplitude * (-x / (2.0 * tau)).exp();
    let phase = delta * x;
    // (1 - e^{-i phase}) / (i delta tau), series form near phase = 0
    let loaded = if phase.abs() < 1e-6 {
        Complex64::new(x / tau, -0.5 * phase * x / tau)
    } else {
        let one_minus = Complex64::new(1.0 - phase.cos(), phase.sin());
        one_minus / Complex64::new(0.0, delta * tau)
    };
    (Complex64::new(1.0, 0.0) - loaded) * envelope
}

/// Filtered envelope for a cavity placed on `mode`.
pub fn filtered_amplitude(
    p: &BiphotonParams,
    d: &DetuningParams,
    mode: Mode,
    dt: f64,
) -> Complex64 {
    if p.cavity_sees_rising(mode) {
        filtered_amplitude_analytic(p, d, dt)
    } else {
        filtered_amplitude_swapped(p, d, dt)
    }
}

pub fn intensity(amp: Complex64) -> f64 {
    amp.norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TAU: f64 = 5.9;

    fn source() -> BiphotonParams {
        BiphotonParams::measured()
    }

    fn det(delta: f64) -> DetuningParams {
        DetuningParams::new(delta, WeightConvention::DeltaTau).unwrap()
    }

    #[test]
    fn amplitude_gate_and_decay() {
        let p = source();
        assert_eq!(biphoton_amplitude(&p, -1.0).norm(), 0.0);
        assert_eq!(biphoton_amplitude(&p, 0.0).re, 1.0);
        let v = biphoton_amplitude(&p, 2.0 * TAU).re;
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn idler_first_is_mirrored() {
        let p = BiphotonParams::new(1.0, TAU, Ordering::IdlerFirst).unwrap();
        let q = source();
        for dt in [-12.0, -3.0, 0.0, 4.5] {
            assert_eq!(biphoton_amplitude(&p, dt), biphoton_amplitude(&q, -dt));
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(BiphotonParams::new(1.0, 0.0, Ordering::SignalFirst).is_err());
        assert!(BiphotonParams::new(0.0, 1.0, Ordering::SignalFirst).is_err());
        assert!(BiphotonParams::new(-1.0, 1.0, Ordering::SignalFirst).is_err());
        assert!(DetuningParams::new(f64::NAN, WeightConvention::DeltaTau).is_err());
    }

    #[test]
    fn resonant_filter_is_time_reversed() {
        let p = source();
        let d = DetuningParams::resonant();
        let v = filtered_amplitude_analytic(&p, &d, -TAU).re;
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.6065).abs() < 1e-4);
        assert_eq!(filtered_amplitude_analytic(&p, &d, 1.0).norm(), 0.0);
    }

    #[test]
    fn large_detuning_recovers_decay() {
        let p = source();
        let d = det(1e6);
        for dt in [0.5, 3.0, 10.0] {
            let a = filtered_amplitude_analytic(&p, &d, dt).norm();
            let b = biphoton_amplitude(&p, dt).norm();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_weight_is_symmetric() {
        let p = source();
        let d = det(1.0 / TAU);
        let plus = filtered_amplitude_analytic(&p, &d, 2.0).norm();
        let minus = filtered_amplitude_analytic(&p, &d, -2.0).norm();
        assert!((plus - minus).abs() < 1e-15);
        let doubled = DetuningParams::new(0.5 / TAU, WeightConvention::TwoDeltaTau).unwrap();
        assert!((doubled.weight(TAU) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn intensity_values() {
        assert_eq!(intensity(Complex64::new(0.0, 0.0)), 0.0);
        assert_eq!(intensity(Complex64::new(1.0, 0.0)), 1.0);
        let v = intensity(Complex64::new((-0.5f64).exp(), 0.0));
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn swapped_resonant_has_node_at_tau() {
        let p = source();
        let d = DetuningParams::resonant();
        let v = filtered_amplitude_swapped(&p, &d, TAU);
        assert!(v.norm() < 1e-15);
        let v = filtered_amplitude_swapped(&p, &d, 2.0 * TAU).re;
        assert!((v + (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(filtered_amplitude_swapped(&p, &d, -0.1).norm(), 0.0);
    }

    #[test]
    fn swapped_series_branch_is_continuous() {
        let p = source();
        let x = 3.0;
        let below = filtered_amplitude_swapped(&p, &det(1e-7 / x * 0.9), x);
        let above = filtered_amplitude_swapped(&p, &det(1e-7 / x * 1.1 * 10.0), x);
        assert!((below - above).norm() < 1e-6);
    }

    /// Composite Simpson over [a, b] with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn normalization_by_quadrature() {
        // span 70 tau total; the discontinuity at 0 is a panel edge.
        let p = BiphotonParams::new(1.7, TAU, Ordering::SignalFirst).unwrap();
        let exact = p.amplitude * p.amplitude * p.tau;
        let half = 35.0 * TAU;
        let n = 20_000;
        let input = simpson(|t| intensity(biphoton_amplitude(&p, t)), 0.0, half, n);
        assert!(((input - exact) / exact).abs() < 1e-9);
        for delta in [0.0, 0.05, 0.2, 1.0] {
            let d = det(delta);
            let f = |t: f64| intensity(filtered_amplitude_analytic(&p, &d, t));
            // right-limit on the positive side
            let pos = simpson(|t| f(t.max(1e-300)), 0.0, half, n);
            let neg = simpson(f, -half, 0.0, n);
            assert!(((pos + neg - exact) / exact).abs() < 1e-9, "delta {delta}");
            let g = |t: f64| intensity(filtered_amplitude_swapped(&p, &d, t));
            let sw = simpson(g, 0.0, half, n);
            assert!(((sw - exact) / exact).abs() < 1e-9, "swapped delta {delta}");
        }
    }

    #[test]
    fn log_slope_unchanged() {
        let p = source();
        let d = det(0.17);
        let f = |t: f64| intensity(filtered_amplitude_analytic(&p, &d, t)).ln();
        let right = (f(6.0) - f(2.0)) / 4.0;
        let left = (f(-2.0) - f(-6.0)) / 4.0;
        assert!((right + 1.0 / TAU).abs() < 1e-12);
        assert!((left - 1.0 / TAU).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn reversal_at_resonance(dt in -80.0f64..80.0, tau in 0.5f64..20.0) {
            let p = BiphotonParams::new(1.0, tau, Ordering::SignalFirst).unwrap();
            let d = DetuningParams::resonant();
            if dt != 0.0 {
                let lhs = filtered_amplitude_analytic(&p, &d, dt).norm();
                let rhs = biphoton_amplitude(&p, -dt).norm();
                prop_assert!((lhs - rhs).abs() < 1e-15);
            }
        }

        #[test]
        fn crossover_is_monotone(a in 0.0f64..5.0, b in 0.0f64..5.0) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let f_lo = decaying_side_fraction(&det(-lo), TAU);
            let f_hi = decaying_side_fraction(&det(hi), TAU);
            prop_assert!(f_hi > f_lo);
        }
    }
}
