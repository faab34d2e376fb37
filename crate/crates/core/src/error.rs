use thiserror::Error;

/// Errors shared by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("column index {index} out of range for dimension {dim}")]
    ColumnOutOfRange { index: usize, dim: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Finite-time blow-up. `node` is the first grid node whose state
    /// is non-finite.
    #[error("trajectory diverged at node {node}")]
    Divergence { node: usize },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("time {t} outside grid range [{t0}, {t1}]")]
    TimeOutOfRange { t: f64, t0: f64, t1: f64 },

    #[error("time {t} is not a node of the grid (dt = {dt})")]
    NotANode { t: f64, dt: f64 },

    #[error("all {n_paths} sample paths diverged before the probe time")]
    AllPathsDiverged { n_paths: usize },

    #[error("epsilon ladder must be strictly decreasing and positive")]
    InvalidLadder,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
