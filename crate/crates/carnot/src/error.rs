use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum CarnotError {
    /// Structural mismatch between two objects (dimension, grid shape, ...).
    #[error("structural mismatch: {0}")]
    Structural(String),

    /// An argument outside the operation's domain (λ ≤ 0, p < 1, ball outside box, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A quantity was requested at a point where it is singular.
    #[error("singularity: {0}")]
    Singular(String),

    /// The input makes the requested measurement meaningless (e.g. f ≡ 0 for a ratio).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// An iterative solve hit its iteration cap before reaching tolerance.
    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Configuration file / flag problems.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CarnotError>;
