use analog_portfolio::Error as CoreError;

/// Failure of one pipeline stage. The exit code is 2 for usage and input
/// problems and 1 for numerical failures.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("[{stage}] {message}")]
    Usage { stage: String, message: String },
    #[error("[{stage}] {message}")]
    Numeric { stage: String, message: String },
}

impl CliError {
    pub fn usage(stage: &str, message: impl Into<String>) -> Self {
        CliError::Usage {
            stage: stage.into(),
            message: message.into(),
        }
    }

    pub fn numeric(stage: &str, message: impl Into<String>) -> Self {
        CliError::Numeric {
            stage: stage.into(),
            message: message.into(),
        }
    }

    /// Tags a library error with the stage it came from.
    pub fn from_core(stage: &str, err: CoreError) -> Self {
        match err {
            CoreError::Parse { .. }
            | CoreError::NoSamples
            | CoreError::Contract(_)
            | CoreError::Dimension(_)
            | CoreError::Config(_)
            | CoreError::Io(_)
            | CoreError::Json(_) => Self::usage(stage, err.to_string()),
            _ => Self::numeric(stage, err.to_string()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => 2,
            CliError::Numeric { .. } => 1,
        }
    }
}

/// `.stage("name")` on library results.
pub trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T, CliError>;
}

impl<T> StageExt<T> for analog_portfolio::Result<T> {
    fn stage(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::from_core(stage, e))
    }
}
