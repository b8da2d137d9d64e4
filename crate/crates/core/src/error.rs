use thiserror::Error;

/// Errors raised by the library.
///
/// Variants fall into two families: input validation (`InvalidInput`,
/// `Parse`, `Config`) and numerical certification (`Certificate`,
/// `Tail`, `NonConvergence`, `Overflow`). The command-line front end maps
/// the first family to exit code 2 and the second to exit code 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum VarlabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("certificate `{name}` failed: {detail}")]
    Certificate { name: String, detail: String },

    #[error("tail diagnostic failed: {0}")]
    Tail(String),

    #[error("no convergence after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    #[error("overflow: {0}")]
    Overflow(String),
}

impl VarlabError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        VarlabError::InvalidInput(msg.into())
    }

    /// True for errors caused by numerical certificates rather than bad input.
    pub fn is_certification_failure(&self) -> bool {
        matches!(
            self,
            VarlabError::Certificate { .. }
                | VarlabError::Tail(_)
                | VarlabError::NonConvergence { .. }
                | VarlabError::Overflow(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, VarlabError>;
