//! Heralded single-photon envelope reversal with an asymmetric cavity.
//!
//! Time is in nanoseconds and angular frequency in rad/ns throughout; the
//! free spectral range is an ordinary frequency in GHz.

pub mod biphoton;
pub mod cli;
pub mod detection;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod spectral;
pub mod units;

pub use error::{Error, Result};
