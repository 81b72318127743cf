use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("matrix market parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported matrix: {0}")]
    Unsupported(String),

    #[error("invalid matrix structure: {0}")]
    InvalidStructure(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is singular (zero pivot at position {0})")]
    Singular(usize),

    #[error("order {n} exceeds the dense oracle cap of {cap}")]
    OracleCap { n: usize, cap: usize },

    #[error("index {index} out of range for order {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("iterative solver did not converge for column {column} after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence {
        column: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("singular triplets did not converge after {iterations} iterations (worst residual {worst_residual:e}, target {target:e})")]
    SvdNoConvergence {
        iterations: usize,
        worst_residual: f64,
        target: f64,
    },

    #[error("least-squares system is rank deficient: all abscissae equal")]
    RankDeficient,

    #[error("need at least two distinct knots, got {0}")]
    TooFewKnots(usize),

    #[error("probe indices overlap the fitting set (index {0})")]
    ProbeOverlap(usize),

    #[error("trace estimate is zero at step {0}; relative error undefined")]
    ZeroTrace(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
