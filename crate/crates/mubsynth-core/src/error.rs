use alloc::string::String;

/// Errors reported by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument violated a precondition (dimension mismatch, out-of-range
    /// index, non-finite value, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A basis-state row had vanishing norm; the solution is pathological.
    #[error("degenerate basis state: basis {basis}, state {state} has norm below 1e-12")]
    DegenerateState { basis: usize, state: usize },

    /// A matched-basis conditional distribution was undefined (detection
    /// probability below threshold), so no QBER can be extracted.
    #[error("undefined matched-basis conditional for basis {basis}, state {state}")]
    UndefinedConditional { basis: usize, state: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
