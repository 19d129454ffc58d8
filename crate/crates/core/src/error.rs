use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("Hermite order {order} exceeds evaluator maximum {max}")]
    OrderOverflow { order: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("trajectory diverged at step {step} (dt = {dt}); reduce the time step")]
    Divergence { step: usize, dt: f64 },

    #[error("inversion run aborted: {0}")]
    RunAborted(String),

    #[error("eigensolver oracle failed: {0}")]
    Oracle(String),

    #[error("invalid level transition: {0}")]
    InvalidTransition(String),

    #[error("posterior weights vanish on the whole grid")]
    DegeneratePosterior,

    #[error("degenerate regression design: {0}")]
    DegenerateDesign(String),

    #[error("config parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    ConfigParse {
        line: Option<usize>,
        message: String,
    },

    #[error("config validation error in `{field}`: {message}")]
    ConfigValidation { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::RunAborted(_)
                | Error::Oracle(_)
                | Error::DegeneratePosterior
                | Error::DegenerateDesign(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
