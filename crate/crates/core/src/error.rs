use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {}", join_violations(.0))]
    InvalidConfig(Vec<Violation>),

    #[error("dimension mismatch: expected {expected} entries, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("integration failed at t = {time:e} s: {reason}")]
    Integration { time: f64, reason: String },

    #[error("singular linear system (pivot {pivot} vanished)")]
    Singular { pivot: usize },

    #[error("newton iteration failed: {0}")]
    Newton(String),

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error("plot error: {0}")]
    Plot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors originating in a numerical routine rather than the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Integration { .. }
                | Error::Singular { .. }
                | Error::Newton(_)
                | Error::Eigen(_)
        )
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// A single broken invariant found while validating a network configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    NotPositive(&'static str),
    Negative(&'static str),
    NotFinite,
    Missing(&'static str),
    Dimension { expected: usize, found: usize },
    Invalid(String),
}

impl Violation {
    pub fn new(field: impl Into<String>, kind: ViolationKind) -> Self {
        Self {
            field: field.into(),
            kind,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::NotPositive(what) => write!(f, "{}: {what} must be positive", self.field),
            ViolationKind::Negative(what) => {
                write!(f, "{}: {what} must be non-negative", self.field)
            }
            ViolationKind::NotFinite => write!(f, "{}: value must be finite", self.field),
            ViolationKind::Missing(what) => write!(f, "{}: at least one {what} is required", self.field),
            ViolationKind::Invalid(msg) => write!(f, "{}: {msg}", self.field),
            ViolationKind::Dimension { expected, found } => write!(
                f,
                "{}: dimension mismatch, expected {expected} entries, found {found}",
                self.field
            ),
        }
    }
}
