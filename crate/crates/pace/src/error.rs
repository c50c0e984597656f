use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Input matrix to an SO(3) projection is rank-deficient.
    #[error("degenerate projection: input matrix has rank < 2")]
    DegenerateProjection,

    /// Point has non-positive depth and cannot be projected.
    #[error("point behind camera: z = {0}")]
    BehindCamera(f64),

    /// All measurement weights are zero.
    #[error("degenerate weights: sum of weights is not positive")]
    DegenerateWeights,

    /// Shape system is singular (lambda = 0 with rank-deficient basis).
    #[error("ill-posed shape system: regularize with lambda > 0")]
    IllPosedShape,

    /// A solver was handed a problem violating its preconditions.
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    /// Matrix factorization broke down inside a solver.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Leading eigenvector of the relaxation solution cannot be normalized.
    #[error("rounding failure: leading eigenvector has near-zero first entry")]
    RoundingFailure,

    /// Bearing measurement matrix W is singular (all bearings parallel).
    #[error("degenerate bearings: sum of projection matrices is singular")]
    DegenerateBearings,

    /// Robust loop converged with fewer inliers than the minimal observable set.
    #[error("robust estimation failed: {0}")]
    RobustFailure(String),

    /// Covisibility normal is degenerate; the dictionary entry is undefined.
    #[error("winding dictionary entry undefined for triplet ({0}, {1}, {2})")]
    DictionaryEntryUndefined(usize, usize, usize),

    /// A file did not match its schema.
    #[error("parse error in {path}: field `{field}`: {message}")]
    Parse {
        path: String,
        field: String,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
