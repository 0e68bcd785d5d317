use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector field or its derivative produced a non-finite value.
    #[error("non-finite evaluation of {what} at x = {state:?}")]
    EvaluationDomain { what: String, state: Vec<f64> },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid bracket basis: {0}")]
    InvalidBasis(String),

    /// The bracket matrix is numerically singular, i.e. the rank condition fails at `state`.
    #[error("bracket matrix rank-deficient (condition estimate {condition:.3e} > {threshold:.1e})")]
    RankDeficient { condition: f64, threshold: f64 },

    #[error("point outside the free space (navigation radicand {radicand:.3e} < 0)")]
    OutsideFreeSpace { radicand: f64 },

    #[error("gradient requested at or beyond an obstacle boundary (obstacle product {product:.3e})")]
    BoundarySingularity { product: f64 },

    #[error("invalid frequency assignment: {0}")]
    InvalidFrequencies(String),

    #[error("no non-resonant frequency assignment with magnitude <= {bound}")]
    AssignmentFailed { bound: i64 },

    #[error("collision at t = {time:.6}: free-space margin {margin:.3e} at x = {state:?}")]
    Collision { time: f64, state: Vec<f64>, margin: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("scenario schema error: {0}")]
    Schema(String),

    #[error("infeasible scenario: {0}")]
    Infeasible(String),

    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
