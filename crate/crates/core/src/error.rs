use thiserror::Error;

/// Errors raised by the numerical kernels, solvers and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("corrector failed to converge at node {node} (t = {t})")]
    StepFailure { node: usize, t: f64 },

    #[error("indeterminate blow-up status: {0}")]
    Indeterminate(String),

    #[error("rate undefined: {0}")]
    RateUndefined(String),

    #[error("state error: {0}")]
    State(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics themselves, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Overflow(_) | Error::StepFailure { .. } | Error::Indeterminate(_)
        )
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Overflow(_) => "overflow",
            Error::Precondition(_) => "precondition",
            Error::StepFailure { .. } => "step_failure",
            Error::Indeterminate(_) => "indeterminate",
            Error::RateUndefined(_) => "rate_undefined",
            Error::State(_) => "state",
            Error::Config(_) => "config",
            Error::Degenerate(_) => "degenerate",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
