use std::path::PathBuf;

/// Errors produced anywhere in the estimation / CSG pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid coalition: {0}")]
    InvalidCoalition(String),

    #[error("blocks overlap on agent {agent}")]
    OverlappingBlocks { agent: usize },

    #[error("agents not covered by any block: {agents:?}")]
    UncoveredAgents { agents: Vec<usize> },

    #[error("empty block in coalition structure")]
    EmptyBlock,

    /// Columns (0-based coalition indices) whose inclusion makes the
    /// least-squares subproblem rank deficient.
    #[error("rank-deficient design on columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("{what} = {got} exceeds the cap of {cap}")]
    CapExceeded {
        what: &'static str,
        got: usize,
        cap: usize,
    },

    #[error("episode batch carries no stored noise vector")]
    MissingNoise,

    #[error("BGCP trace does not contain correlation vectors")]
    MissingCorrelations,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
