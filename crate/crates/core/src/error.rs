use thiserror::Error;

/// Errors produced by the solver, the scene-graph pipeline and the file layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid {what}: {reason}")]
    Validation { what: String, reason: String },

    #[error("degenerate column {column} at level {level}: no cluster can absorb it")]
    DegenerateColumn { level: usize, column: usize },

    #[error("confidence undefined: task entity has zero marginal probability")]
    UndefinedConfidence,

    #[error("hierarchy error at entity `{id}`: {reason}")]
    Hierarchy { id: String, reason: String },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("refinement query `{query}` failed: {reason}")]
    Refinement { query: String, reason: String },

    #[error("{path}: {reason}")]
    Io { path: String, reason: String },

    #[error("{path}:{line}:{column}: {reason}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        reason: String,
    },

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            found,
        }
    }

    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            what: what.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn hierarchy(id: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Hierarchy {
            id: id.into(),
            reason: reason.into(),
        }
    }

    /// Innermost error, unwrapping any per-round context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Round { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
