use alloc::string::String;

/// Errors raised by the engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A configuration value violates an invariant. The message names the field.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called in a state that does not permit it.
    #[error("state error: {0}")]
    State(String),
    /// An argument is out of range or has the wrong shape.
    #[error("argument error: {0}")]
    Argument(String),
    /// Non-finite values appeared in a numerical computation.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// The scripted expert could not produce a demonstration.
    #[error("generation error: {0}")]
    Generation(String),
}

pub type Result<T> = core::result::Result<T, Error>;
