//! Cavity reflection response, derived cavity figures and the
//! frequency-domain filtering pipeline.

mod cavity;
mod envelope;
mod filter;
pub mod transform;

pub use cavity::{
    cavity_response, derive_cavity, matched_check, single_mode_response, CavityDerived,
    CavityParams, ResponseModel,
};
pub use envelope::{ComplexEnvelope, TimeGrid, MIN_SPAN_TAU};
pub use filter::{
    apply_cavity_filter, filter_biphoton, from_mode_time, intensity_overlap, max_intensity_error,
    side_weight_fraction, symmetric_detuning, to_mode_time, FilteredPair, MAX_STEP_TAU,
};
pub use transform::{transform_pair, Spectrum};
