//! Unit conventions: time in nanoseconds, angular frequency in rad/ns,
//! free spectral range in GHz (cycles per ns).

use std::f64::consts::PI;

/// Ordinary frequency in MHz to angular frequency in rad/ns.
pub fn mhz_to_rad_per_ns(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz * 1e-3
}

pub fn rad_per_ns_to_mhz(w: f64) -> f64 {
    w * 1e3 / (2.0 * PI)
}

pub const NS_PER_S: f64 = 1e9;
pub const PS_PER_NS: f64 = 1e3;
