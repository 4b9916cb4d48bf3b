//! Error types shared across the toolkit.

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by callers that map failures to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid input or precondition violation.
    Config,
    /// The requested parameters fall outside the perturbative regime and the
    /// method refuses to proceed.
    Regime,
    /// A numerical procedure failed (singularity, divergence, lost accuracy).
    Numerical,
}

/// Failure modes of the assembly, resolvent, and normal-form machinery.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Precondition violation on user-supplied data.
    #[error("invalid input: {0}")]
    Domain(String),

    /// Parameters outside the regime a method is certified for.
    #[error("regime refusal: {0}")]
    Regime(String),

    /// Rank-one update denominator `1 + <A^{-1}f, g>` vanished.
    #[error("singular rank-one update: |1 + <A^-1 f, g>| = {defect:.3e}")]
    SingularUpdate { defect: f64 },

    /// Resolvent requested too close to a spectral pole.
    #[error("resolvent parameter within {distance:.3e} of a spectral pole")]
    NearPole { distance: f64 },

    /// A quadrature node collided with a spectral pole.
    #[error("contour node {node} within {distance:.3e} of a spectral pole")]
    ContourCollision { node: usize, distance: f64 },

    /// An iteration exhausted its budget.
    #[error("no convergence after {iterations} iterations (last defect {defect:.3e})")]
    NonConvergence { iterations: usize, defect: f64 },

    /// A projection or basis had unexpected numerical rank.
    #[error("rank defect: expected {expected}, got {got}")]
    RankDefect { expected: usize, got: usize },

    /// A vector failed the eigenpair residual test.
    #[error("candidate eigenvector residual {residual:.3e} above tolerance")]
    NonEigenvector { residual: f64 },

    /// Two independent computation routes produced incompatible results.
    #[error("{first} and {second} routes disagree by {gap:.3e} (tolerance {tolerance:.3e})")]
    Divergence {
        first: &'static str,
        second: &'static str,
        gap: f64,
        tolerance: f64,
    },

    /// A dense linear solve failed.
    #[error("linear solve failed: {0}")]
    Solve(String),

    /// The eigensolver did not reach its accuracy contract.
    #[error("eigensolver failure: {0}")]
    Eigensolver(String),
}

impl Error {
    /// Classifies the error for exit-code mapping.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Domain(_) => ErrorKind::Config,
            Error::Regime(_) => ErrorKind::Regime,
            _ => ErrorKind::Numerical,
        }
    }
}
