//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used by every fallible function in the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All the ways an operation in this crate can fail.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument or data value violated a documented contract.
    #[error("validation: {0}")]
    Validation(String),

    /// A scenario or run configuration cannot be satisfied as given.
    #[error("configuration: {0}")]
    Config(String),

    /// Malformed formula or file syntax.
    #[error("parse: {0}")]
    Parse(String),

    /// A formula referenced an agent the model does not declare.
    #[error("undeclared agent `{0}`")]
    UndeclaredAgent(String),

    /// A formula referenced an atom outside the model's vocabulary.
    #[error("undeclared atom `{0}`")]
    UndeclaredAtom(String),

    /// A world name that does not exist in the model.
    #[error("unknown world `{0}`")]
    UnknownWorld(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Shorthand for a validation error with a formatted message.
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Shorthand for a configuration error with a formatted message.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Shorthand for a parse error with a formatted message.
    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
