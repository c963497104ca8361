use thiserror::Error;

/// Errors raised by the library. Solver divergence is reported through the
/// run report rather than as an error, so callers can still inspect the trace.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("constraint variant mismatch: {0}")]
    Variant(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("problem generation failed: {0}")]
    Generation(String),
    #[error("degenerate matrix: {0}")]
    Degenerate(String),
    #[error("missing diagnostic input: {0}")]
    Diagnostic(String),
    #[error("rate fit failed: {0}")]
    Fit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
