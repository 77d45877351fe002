use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("naive scaling diverged at iteration {iteration} (non-finite scaling factor); use the stabilized solver")]
    Diverged { iteration: usize },

    #[error(
        "truncated kernel has an empty {side} {index}; decrease theta or absorb duals more often"
    )]
    Starvation { side: &'static str, index: usize },

    #[error("size gate exceeded: {what} has {size} entries, limit {limit}")]
    SizeGate { what: &'static str, size: usize, limit: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{source_name}:{line}: {message}")]
    Parse { source_name: String, line: usize, message: String },

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}
