use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid too coarse: step {dt_step} ns exceeds {limit} ns (tau / 20)")]
    GridTooCoarse { dt_step: f64, limit: f64 },

    #[error("grid span {span} ns is shorter than the required {required} ns (40 tau)")]
    SpanTooShort { span: f64, required: f64 },

    #[error("transform length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("integration step {step} ns exceeds the stability bound {bound} ns")]
    StepTooLarge { step: f64, bound: f64 },

    #[error("input envelope is not normalised: total probability {0}")]
    NotNormalized(f64),

    #[error("binning mismatch: {0}")]
    BinningMismatch(String),

    #[error("bin width {bin_width} ns does not resolve tau (limit {limit} ns)")]
    BinTooWide { bin_width: f64, limit: f64 },

    #[error("far-off-resonance histogram has zero total counts")]
    ZeroReference,

    #[error("model shape is identically zero")]
    ZeroModel,

    #[error("time tags on channel {channel} are not strictly increasing at index {index}")]
    Unsorted { channel: u32, index: usize },

    #[error("requested event count {requested:.3e} exceeds the generator limit {limit:.3e}")]
    TooManyEvents { requested: f64, limit: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter { .. } => 2,
            Error::Io(_) => 1,
            _ => 3,
        }
    }
}
