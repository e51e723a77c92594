use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension error: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("degenerate evolution at t = {t}: trace {trace:e} vanished")]
    DegenerateEvolution { t: f64, trace: f64 },

    #[error("step size underflow at t = {t} (h = {h:e}); problem too stiff for the explicit integrator")]
    StepUnderflow { t: f64, h: f64 },

    #[error("integration exceeded {max_steps} steps before reaching t = {t_end}")]
    TooManySteps { max_steps: usize, t_end: f64 },

    #[error("spectral analysis failed: {0}")]
    Analysis(String),

    #[error("attractor is not unique (indices {indices:?}); use degeneracy_run")]
    DegenerateAttractor { indices: Vec<usize> },

    #[error("time {t} outside window [{t_i}, {t_f}]")]
    OutsideWindow { t: f64, t_i: f64, t_f: f64 },

    #[error("io error: {0}")]
    Io(String),

    #[error("invalid configuration:\n{}", list_issues(.0))]
    Config(Vec<ConfigIssue>),
}

/// One located configuration problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    /// 1-based line, when the problem can be pinned to one.
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub key: Option<String>,
    pub reason: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}")?,
            (Some(l), None) => write!(f, "line {l}")?,
            _ => write!(f, "config")?,
        }
        if let Some(k) = &self.key {
            write!(f, ", key `{k}`")?;
        }
        write!(f, ": {}", self.reason)
    }
}

fn list_issues(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
