use thiserror::Error;

/// Errors raised by the reduction toolkit.
///
/// Every variant carries enough context to be reported verbatim in a run
/// summary; `code()` gives the stable machine-readable tag.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum OpmError {
    #[error("matrix is not diagonalizable (relative reconstruction residual {residual:.3e})")]
    NonDiagonalizable { residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("root not found: {0}")]
    RootNotFound(String),

    #[error("integration diverged at t = {time} (state norm {norm:.3e})")]
    Diverged { time: f64, norm: f64 },

    #[error("need at least {needed} samples with distinct parameter values, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("tau = +inf limit diverges for (i, j, n) = {triple:?}: Re(denominator) = {real_part:.3e} <= 0")]
    DivergentLimit {
        triple: (usize, usize, usize),
        real_part: f64,
    },

    #[error("memory term not initialized for t = {time}")]
    UninitializedMemory { time: f64 },

    #[error("history buffer too short: need {needed} increments, got {got}")]
    HistoryTooShort { needed: usize, got: usize },

    #[error("resonance: Re(lambda_i + lambda_j - lambda_n) = {real_part:.3e} <= 0 for (i, j, n) = {triple:?}")]
    ResonanceViolation {
        triple: (usize, usize, usize),
        real_part: f64,
    },

    #[error("zero eigenvalue for unresolved mode {mode}")]
    ZeroEigenvalue { mode: usize },

    #[error("mean square of mode {mode} vanishes on the training window")]
    ZeroVariance { mode: usize },

    #[error("parameterization vanishes identically on the trajectory")]
    ZeroParameterization,

    #[error("reconstructed state is not real (imaginary residue {residue:.3e})")]
    NonRealOutput { residue: f64 },

    #[error("negative discriminant {value:.3e} at t = {time} (Y = {state})")]
    NegativeDiscriminant { value: f64, time: f64, state: f64 },

    #[error("series too short: {0}")]
    TooShort(String),

    #[error("no transition detected before F = {f_max}")]
    NoTransition { f_max: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training data requested at r = {requested} beyond the allowed bound r_D = {bound}")]
    LookAhead { requested: f64, bound: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl OpmError {
    pub fn code(&self) -> &'static str {
        match self {
            OpmError::NonDiagonalizable { .. } => "non_diagonalizable",
            OpmError::DimensionMismatch { .. } => "dimension_mismatch",
            OpmError::RootNotFound(_) => "root_not_found",
            OpmError::Diverged { .. } => "diverged",
            OpmError::InsufficientSamples { .. } => "insufficient_samples",
            OpmError::DivergentLimit { .. } => "divergent_limit",
            OpmError::UninitializedMemory { .. } => "uninitialized_memory",
            OpmError::HistoryTooShort { .. } => "history_too_short",
            OpmError::ResonanceViolation { .. } => "resonance_violation",
            OpmError::ZeroEigenvalue { .. } => "zero_eigenvalue",
            OpmError::ZeroVariance { .. } => "zero_variance",
            OpmError::ZeroParameterization => "zero_parameterization",
            OpmError::NonRealOutput { .. } => "non_real_output",
            OpmError::NegativeDiscriminant { .. } => "negative_discriminant",
            OpmError::TooShort(_) => "too_short",
            OpmError::NoTransition { .. } => "no_transition",
            OpmError::InvalidArgument(_) => "invalid_argument",
            OpmError::LookAhead { .. } => "look_ahead",
            OpmError::Io(_) => "io",
        }
    }

    /// Divergence and model-validity breaches, as opposed to bad input.
    pub fn is_validity_breach(&self) -> bool {
        matches!(
            self,
            OpmError::Diverged { .. }
                | OpmError::NegativeDiscriminant { .. }
                | OpmError::NonRealOutput { .. }
                | OpmError::DivergentLimit { .. }
                | OpmError::ResonanceViolation { .. }
        )
    }
}

impl From<std::io::Error> for OpmError {
    fn from(e: std::io::Error) -> Self {
        OpmError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for OpmError {
    fn from(e: serde_json::Error) -> Self {
        OpmError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, OpmError>;
