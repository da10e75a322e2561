use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("lowest eigenstates are degenerate (splitting {splitting:.3e} Hz); the field does not define a qubit")]
    Degeneracy { splitting: f64 },

    #[error("ambiguous spin labeling: eigenstate spin purity {purity:.4} is below 0.501")]
    AmbiguousLabeling { purity: f64 },

    #[error("target {target:.6e} Hz is unreachable with fields up to {max_field} T")]
    OutOfRange { target: f64, max_field: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("integrator failure at t = {time:.6e} s: {reason}")]
    IntegratorFailure { time: f64, reason: String },

    #[error("step size underflow at t = {time:.6e} s (h = {step:.3e} s); problem looks stiff")]
    Stiffness { time: f64, step: f64 },

    #[error("on-chip power bounds are inverted: lower {lower:.6e} W > upper {upper:.6e} W")]
    InconsistentBounds { lower: f64, upper: f64 },

    #[error("optical pulses overlap at t = {at:.6e} s")]
    UnsupportedOverlap { at: f64 },

    #[error("optical and acoustic pulses overlap at t = {at:.6e} s without the overlap flag")]
    UnflaggedOverlap { at: f64 },

    #[error("sequence timing has already been corrected for propagation delay")]
    AlreadyCorrected,

    #[error("sequence timing has not been corrected for propagation delay")]
    TimingNotCorrected,

    #[error("initialization window collects no signal; normalization is undefined")]
    UndefinedNormalization,

    #[error("window [{start:.3e}, {end:.3e}] s lies outside the histogram support")]
    WindowOutOfRange { start: f64, end: f64 },

    #[error("no oscillation found above the noise floor")]
    NoOscillation,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("peak lies at the edge of the scan (index {index})")]
    EdgePeak { index: usize },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Stable snake_case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Degeneracy { .. } => "degeneracy",
            Error::AmbiguousLabeling { .. } => "ambiguous_labeling",
            Error::OutOfRange { .. } => "out_of_range",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidState(_) => "invalid_state",
            Error::IntegratorFailure { .. } => "integrator_failure",
            Error::Stiffness { .. } => "stiffness",
            Error::InconsistentBounds { .. } => "inconsistent_bounds",
            Error::UnsupportedOverlap { .. } => "unsupported_overlap",
            Error::UnflaggedOverlap { .. } => "unflagged_overlap",
            Error::AlreadyCorrected => "already_corrected",
            Error::TimingNotCorrected => "timing_not_corrected",
            Error::UndefinedNormalization => "undefined_normalization",
            Error::WindowOutOfRange { .. } => "window_out_of_range",
            Error::NoOscillation => "no_oscillation",
            Error::DegenerateFit(_) => "degenerate_fit",
            Error::EdgePeak { .. } => "edge_peak",
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
            Error::Serialization(_) => "serialization",
        }
    }

    /// Short tag naming the module family the error originates from.
    pub fn origin(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "parameters",
            Error::Degeneracy { .. } | Error::AmbiguousLabeling { .. } | Error::OutOfRange { .. } => {
                "siv_model"
            }
            Error::DimensionMismatch { .. }
            | Error::InvalidState(_)
            | Error::IntegratorFailure { .. }
            | Error::Stiffness { .. } => "dynamics",
            Error::InconsistentBounds { .. } => "saw_device",
            Error::UnsupportedOverlap { .. }
            | Error::UnflaggedOverlap { .. }
            | Error::AlreadyCorrected
            | Error::TimingNotCorrected => "sequence",
            Error::UndefinedNormalization | Error::WindowOutOfRange { .. } => "experiments",
            Error::NoOscillation | Error::DegenerateFit(_) | Error::EdgePeak { .. } => "fitting",
            Error::Config { .. } => "config",
            Error::Io { .. } | Error::Serialization(_) => "io",
        }
    }
}
