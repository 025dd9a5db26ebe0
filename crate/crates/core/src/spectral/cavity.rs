//! Asymmetric Fabry-Perot cavity in reflection.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Power reflectivity of the input mirror.
    pub r1: f64,
    /// Effective power reflectivity of the back mirror, absorption included.
    pub r2: f64,
    /// Free spectral range, GHz.
    pub fsr: f64,
    /// Cavity resonance minus photon carrier, rad/ns.
    pub delta: f64,
    /// Photon carrier frequency, reporting only.
    pub carrier_ref: Option<f64>,
    /// Round-trip loss fraction used by the photon-number estimator.
    pub eta: f64,
}

/// Which form of the reflection response the filter evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResponseModel {
    /// Pole and zero of the nearest longitudinal resonance only.
    #[default]
    SingleMode,
    /// The full periodic response, neighbouring longitudinal modes included.
    Multimode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityDerived {
    pub finesse: f64,
    /// Full width at half maximum, MHz.
    pub linewidth_fwhm: f64,
    /// Field decay rate of the cavity mode, rad/ns.
    pub ring_down_field_rate: f64,
    /// `ring_down_field_rate * 2 tau`; exactly one for a matched cavity.
    pub matched_mismatch: f64,
}

impl CavityParams {
    pub fn new(r1: f64, r2: f64, fsr: f64, delta: f64, eta: f64) -> Result<Self> {
        let c = Self {
            r1,
            r2,
            fsr,
            delta,
            carrier_ref: None,
            eta,
        };
        c.validate()?;
        Ok(c)
    }

    /// Measured cavity: R1 = 0.9410, R2 = 0.998, 2.7 GHz FSR, eta = 0.002, on resonance.
    pub fn measured() -> Self {
        Self {
            r1: 0.9410,
            r2: 0.998,
            fsr: 2.7,
            delta: 0.0,
            carrier_ref: None,
            eta: 0.002,
        }
    }

    /// Lossless cavity whose field ring-down rate is exactly `1 / (2 tau)`.
    pub fn matched(tau: f64, fsr: f64) -> Self {
        Self {
            r1: (-1.0 / (tau * fsr)).exp(),
            r2: 1.0,
            fsr,
            delta: 0.0,
            carrier_ref: None,
            eta: 0.0,
        }
    }

    pub fn with_detuning(self, delta: f64) -> Self {
        Self { delta, ..self }
    }

    pub fn with_r2(self, r2: f64) -> Self {
        Self { r2, ..self }
    }

    /// `R1 = 1` is accepted and describes a mirror that never admits light.
    pub fn validate(&self) -> Result<()> {
        if !(self.r1 > 0.0 && self.r1 <= 1.0) {
            return Err(Error::invalid(
                "r1",
                format!("must lie in (0, 1], got {}", self.r1),
            ));
        }
        if !(self.r2 > 0.0 && self.r2 <= 1.0) {
            return Err(Error::invalid(
                "r2",
                format!("must lie in (0, 1], got {}", self.r2),
            ));
        }
        if !(self.fsr.is_finite() && self.fsr > 0.0) {
            return Err(Error::invalid(
                "fsr",
                format!("must be > 0, got {}", self.fsr),
            ));
        }
        if !self.delta.is_finite() {
            return Err(Error::invalid("delta", "must be finite"));
        }
        if !(self.eta >= 0.0 && self.eta < 1.0) {
            return Err(Error::invalid(
                "eta",
                format!("must lie in [0, 1), got {}", self.eta),
            ));
        }
        Ok(())
    }

    /// Warning text when `eta` and `1 - R2` disagree by more than `tolerance`.
    pub fn loss_consistency_warning(&self, tolerance: f64) -> Option<String> {
        let implied = 1.0 - self.r2;
        if (self.eta - implied).abs() > tolerance {
            Some(format!(
                "round-trip loss eta = {} differs from 1 - R2 = {:.6} by more than {}",
                self.eta, implied, tolerance
            ))
        } else {
            None
        }
    }

    /// Field coupling rate through the input mirror, rad/ns.
    pub fn input_coupling_rate(&self) -> f64 {
        -0.5 * self.r1.ln() * self.fsr
    }

    /// Field loss rate through (or absorbed at) the back mirror, rad/ns.
    pub fn loss_rate(&self) -> f64 {
        -0.5 * self.r2.ln() * self.fsr
    }

    /// Total field decay rate; the pole of the response sits at `-i` times this.
    pub fn total_rate(&self) -> f64 {
        self.input_coupling_rate() + self.loss_rate()
    }
}

/// Reflection response of the cavity at angular offset `omega` (rad/ns) from
/// its resonance:
///
/// `C = (sqrt(R1) - sqrt(R2) e^{i phi}) / (1 - sqrt(R1 R2) e^{i phi})`, `phi = omega / FSR`.
///
/// The sign of `phi` places the pole in the lower half plane, which is the
/// causal branch for the `e^{+i omega t}` forward transform.
pub fn cavity_response(c: &CavityParams, omega: f64) -> Result<Complex64> {
    if !omega.is_finite() {
        return Err(Error::invalid("omega", "must be finite"));
    }
    Ok(response_exact(c, omega))
}

pub(crate) fn response_exact(c: &CavityParams, omega: f64) -> Complex64 {
    if c.r1 >= 1.0 {
        return Complex64::new(1.0, 0.0);
    }
    let z = Complex64::from_polar(1.0, omega / c.fsr);
    let num = c.r1.sqrt() - c.r2.sqrt() * z;
    let den = 1.0 - (c.r1 * c.r2).sqrt() * z;
    num / den
}

/// Nearest-resonance reduction of [`cavity_response`]: its zero and pole,
///
/// `C1 = (omega - i (k1 - kl)) / (omega + i (k1 + kl))`,
///
/// with `k1 = -ln(R1) FSR / 2`, `kl = -ln(R2) FSR / 2`. Equal to the exact
/// response at resonance and unitary when `R2 = 1`.
pub fn single_mode_response(c: &CavityParams, omega: f64) -> Complex64 {
    let k1 = c.input_coupling_rate();
    let kl = c.loss_rate();
    let num = Complex64::new(omega, -(k1 - kl));
    let den = Complex64::new(omega, k1 + kl);
    if den.norm() == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    num / den
}

pub(crate) fn response(c: &CavityParams, omega: f64, model: ResponseModel) -> Complex64 {
    match model {
        ResponseModel::SingleMode => single_mode_response(c, omega),
        ResponseModel::Multimode => response_exact(c, omega),
    }
}

/// Finesse, linewidth, ring-down rate and matching figure for coherence time `tau`.
///
/// The ring-down rate is the decay rate of the response pole,
/// `-ln(sqrt(R1 R2)) FSR`, to which `(1 - sqrt(R1 R2)) FSR` is the first-order
/// approximation.
pub fn derive_cavity(c: &CavityParams, tau: f64) -> Result<CavityDerived> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be > 0, got {tau}")));
    }
    let r = (c.r1 * c.r2).sqrt();
    let finesse = PI * r.sqrt() / (1.0 - r);
    let linewidth_fwhm = c.fsr * 1e3 / finesse;
    let rate = c.total_rate();
    Ok(CavityDerived {
        finesse,
        linewidth_fwhm,
        ring_down_field_rate: rate,
        matched_mismatch: rate * 2.0 * tau,
    })
}

/// Checks the ring-down matching condition, `|mismatch - 1| <= tolerance`.
pub fn matched_check(c: &CavityParams, tau: f64, tolerance: f64) -> Result<CavityDerived> {
    let d = derive_cavity(c, tau)?;
    if (d.matched_mismatch - 1.0).abs() > tolerance {
        return Err(Error::Validation(format!(
            "cavity not matched: ring-down ratio {:.5} outside 1 +/- {}",
            d.matched_mismatch, tolerance
        )));
    }
    Ok(d)
}
