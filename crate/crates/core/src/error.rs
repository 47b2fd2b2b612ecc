//! Error type shared by every module of the crate.

use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, PintError>;

#[derive(Debug, Clone, Error)]
pub enum PintError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("root refinement did not converge: {0}")]
    RootRefinement(String),

    #[error("collocation nodes must be distinct and strictly increasing in (0, 1]")]
    DuplicateNodes,

    #[error("Q G^-1 is not diagonalizable at r = {r}: eigenvalue gap {gap:e} below {threshold:e}")]
    NotDiagonalizable { r: Complex64, gap: f64, threshold: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("alpha = {alpha:e} lies within the keep-away margin of forbidden radius {alpha_star:e}")]
    ForbiddenAlpha { alpha: f64, alpha_star: f64 },

    #[error("inner GMRES solve failed at step slot {step}, node {node}: relative residual {residual:e} after {iterations} iterations")]
    InnerSolve {
        step: usize,
        node: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("transport failure on rank {rank}: {detail}")]
    Transport { rank: usize, detail: String },

    #[error("rank {rank} failed; iteration aborted on all ranks")]
    PeerFailed { rank: usize },

    #[error("loopback deadlock, all unfinished ranks blocked: {wait_graph}")]
    Deadlock { wait_graph: String },

    #[error("configuration error: {0}")]
    Config(String),
}

impl PintError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PintError::InvalidArgument(msg.into())
    }
}
