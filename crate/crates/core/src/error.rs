use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("operation requires a nondecreasing lambda function")]
    UnsupportedMonotonicity,

    #[error("distribution has no finite first moment")]
    NotInD1,

    #[error("precondition not met: {0}")]
    InapplicablePrecondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
