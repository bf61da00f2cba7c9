use std::path::PathBuf;

/// Errors raised by the core library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-binary treatment at row {row}: {value}")]
    NonBinaryTreatment { row: usize, value: f64 },
    #[error("invalid value at row {row} in column `{column}`: {message}")]
    InvalidValue {
        row: usize,
        column: String,
        message: String,
    },
    #[error("dangling endpoint: edge {src}->{dst} references a unit outside 0..{n_units}")]
    DanglingEndpoint { src: usize, dst: usize, n_units: usize },
    #[error("self-loop on unit {0}")]
    SelfLoop(usize),
    #[error("length mismatch: {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid aggregate row {row}: {message}")]
    InvalidAggregate { row: usize, message: String },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("degenerate arms: {n_treated} treated out of {n_units}")]
    DegenerateArms { n_treated: usize, n_units: usize },
    #[error("empty propensity key list")]
    EmptyKeys,
    #[error("singular design (condition number {condition:.3e})")]
    SingularDesign { condition: f64 },
    #[error("zero within-class exposure variance")]
    ZeroWithinClassVariance,
    #[error("exposure level {0} is not occupied")]
    LevelAbsent(u32),
    #[error("no propensity class has both exposed and unexposed units")]
    NoRetainableClass,
    #[error("no matched pairs can be formed (m = 0)")]
    NoMatches,
    #[error("weight builder failed on {failed} of {total} draws")]
    BuilderFailureRate { failed: usize, total: usize },
    #[error("need at least 2 replications, got {0}")]
    TooFewReplications(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    Asymmetric(f64),
    #[error("eigensolver did not converge")]
    EigenNonConvergence,
    #[error("split certificate violated: radicand {0:.3e}")]
    SplitViolated(f64),
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("problem too large for enumeration: {0}")]
    TooLarge(String),
    #[error("exchangeability check failed: {0}")]
    NotExchangeable(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
