use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Two arrays or stores that must line up do not.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A NaN or infinity surfaced while evaluating the named operation.
    #[error("numeric overflow in `{op}`")]
    NumericOverflow { op: &'static str },
    /// A record failed validation.
    #[error("validation error: {0}")]
    Validation(String),
    /// Fisher estimation produced a non-finite gradient for one item.
    #[error("non-finite gradient while estimating Fisher information for item {index}")]
    FisherItem { index: usize },
    /// Training produced a non-finite gradient.
    #[error("non-finite gradient at optimizer step {step}")]
    NonFiniteGradient { step: u64 },
    /// An evaluation could not produce a value.
    #[error("evaluation error: {0}")]
    Evaluation(String),
    /// A training hook (logging, checkpointing) failed; training stopped.
    #[error("training hook failed: {0}")]
    Hook(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
