use opm_core::OpmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Run(#[from] OpmError),
}

impl CliError {
    /// 1 for bad input, 2 for divergence or a model-validity breach.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Run(e) if e.is_validity_breach() => 2,
            _ => 1,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Run(e) => e.code(),
        }
    }
}
