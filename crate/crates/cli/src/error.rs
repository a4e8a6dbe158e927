use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self::Runtime(message.into())
    }

    /// Reattributes a validation error to another field.
    pub fn rename(self, field: &str) -> Self {
        match self {
            Self::Validation { message, .. } => Self::validation(field, message),
            other => other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation { .. } => 2,
            Self::Runtime(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
