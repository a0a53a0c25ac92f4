use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The decoy programs have no feasible point: the tally was corrupted or
    /// the stated intensities do not match the source.
    #[error("observations inconsistent: {0}")]
    Inconsistent(String),

    #[error("invalid input: {}", join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("unknown detector preset `{0}`")]
    UnknownPreset(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("linear program failed: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
