//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MissError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),

    #[error("non-numeric cell at row {row}, column '{column}': '{value}'")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("duplicate header name '{0}'")]
    DuplicateHeader(String),

    #[error("target column '{0}' not found")]
    MissingTargetColumn(String),

    #[error("too few rows: n = {n} must exceed d = {d}")]
    TooFewRows { n: usize, d: usize },

    #[error("gram matrix is singular or ill-conditioned (relative pivot {pivot:.3e}); consider enabling ridge")]
    SingularGram { pivot: f64 },

    #[error("capacitance matrix I - M_S is near-singular (relative pivot {pivot:.3e}); removal makes the problem rank-deficient")]
    SingularCapacitance { pivot: f64 },

    #[error("hessian is singular or not positive definite")]
    SingularHessian,

    #[error("row {0} has leverage >= 1; leave-one-out delta is undefined")]
    PerfectLeverage(usize),

    #[error("row index {0} out of range")]
    InvalidIndex(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("targets must be binary in {{0, 1}}")]
    NonBinaryTargets,

    #[error("newton iterations did not converge within {max_iter} steps (gradient norm {grad_norm:.3e})")]
    NonConvergence { max_iter: usize, grad_norm: f64 },

    #[error("separation detected (parameter norm diverges); enable ridge")]
    Separation,

    #[error("n = {n} exceeds the brute-force cap {cap}")]
    BruteCapExceeded { n: usize, cap: usize },

    #[error("p-search exhausted the interval ({lo:.6e}, {hi:.6e}) without satisfying the strict window")]
    SearchExhausted { lo: f64, hi: f64 },

    #[error("design precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("target function has no evaluable form (gradient-only target)")]
    TargetNotEvaluable,

    #[error("refit failed mid-trace after {selected} selections: {source}")]
    PartialTrace {
        selected: usize,
        #[source]
        source: Box<MissError>,
    },
}

pub type Result<T> = std::result::Result<T, MissError>;
