use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested computation exceeds a configured size guard.
    #[error("resource limit: {what} needs {required}, limit is {limit}")]
    ResourceLimit {
        what: String,
        required: u128,
        limit: u128,
    },

    /// The inputs are well formed but the problem has no admissible answer.
    #[error("{0}")]
    Domain(String),

    #[error("ROC area is undefined without designing sequences")]
    UndefinedQ,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
