use thiserror::Error;

/// Errors surfaced by the solver library.
#[derive(Debug, Error)]
pub enum MgameError {
    /// Caller supplied data outside an operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A documented precondition or runtime guarantee did not hold.
    #[error("contract violation: {0}")]
    ContractViolation(String),
    /// An internal consistency check failed; indicates a bug or corrupted state.
    #[error("internal invariant broken: {0}")]
    InternalInvariant(String),
    /// The operation needs a capability the backing does not provide.
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl MgameError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            MgameError::InvalidInput(_) | MgameError::Io(_) | MgameError::Unsupported(_) => 2,
            MgameError::ContractViolation(_) | MgameError::InternalInvariant(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, MgameError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(MgameError::InvalidInput(msg.into()))
}
