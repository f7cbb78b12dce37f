use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A placement ended up inside the array or another geometric
    /// precondition failed.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// An invalid scalar parameter (negative range, even element count, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Matrix dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix that must be positive (semi)definite is not.
    #[error("matrix not positive semidefinite: {0}")]
    NotPsd(String),

    /// The Fisher information is singular along some direction; the target
    /// parameters are not identifiable from the current illumination.
    #[error("unidentifiable target: {reason} (near-null direction {direction:?})")]
    Unidentifiable {
        reason: String,
        direction: Vec<f64>,
    },

    /// A conic program is structurally malformed.
    #[error("malformed program: {0}")]
    MalformedProgram(String),

    /// The conic solver proved the subproblem infeasible.
    #[error("infeasible subproblem: {0}")]
    Infeasible(String),

    /// The conic solver failed to converge or a recovery step broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Config file / CLI input problems.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
