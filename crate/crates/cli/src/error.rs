use std::fmt;
use std::path::Path;

use fieldlab_core::annotations::AnnotationError;
use fieldlab_core::appforge::AppForgeError;
use fieldlab_core::dataset::DatasetError;
use fieldlab_core::models::ModelError;
use fieldlab_core::training::TrainingError;
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ENVIRONMENT: i32 = 3;

/// A failed command: the module's error code plus the exit status it maps to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CliError {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    pub exit_code: i32,
}

impl CliError {
    pub fn validation(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_owned(),
            message: message.into(),
            exit_code: EXIT_VALIDATION,
        }
    }

    pub fn environment(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_owned(),
            message: message.into(),
            exit_code: EXIT_ENVIRONMENT,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: "USAGE".to_owned(),
            message: message.into(),
            exit_code: EXIT_USAGE,
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::environment("IO_ERROR", format!("{}: {e}", path.display()))
    }

    fn coded(code: &str, message: String, environmental: bool) -> Self {
        if environmental {
            Self::environment(code, message)
        } else {
            Self::validation(code, message)
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<AnnotationError> for CliError {
    fn from(e: AnnotationError) -> Self {
        Self::validation(e.code(), e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::coded(e.code(), e.to_string(), matches!(e, DatasetError::Io(_)))
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::coded(e.code(), e.to_string(), matches!(e, ModelError::Registry(_)))
    }
}

impl From<TrainingError> for CliError {
    fn from(e: TrainingError) -> Self {
        let environmental = matches!(e, TrainingError::TrainerUnavailable(_) | TrainingError::Io(_));
        Self::coded(e.code(), e.to_string(), environmental)
    }
}

impl From<AppForgeError> for CliError {
    fn from(e: AppForgeError) -> Self {
        Self::validation(e.code(), e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
