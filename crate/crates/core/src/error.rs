//! Error type shared by the library.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate information structure: {0}")]
    DegenerateStructure(String),
    #[error("posterior undefined at reports ({x1}, {x2}) with prior {mu}")]
    UndefinedPosterior { mu: f64, x1: f64, x2: f64 },
    #[error("ratio regret undefined: omniscient loss {loss:e} below floor {floor:e}")]
    RatioUndefined { loss: f64, floor: f64 },
    #[error("report atom ({x1}, {x2}) is not on the {n}-grid")]
    AtomOffGrid { x1: f64, x2: f64, n: u32 },
    #[error("QP solver did not converge in {iterations} iterations (gap {gap:e}, tolerance {tolerance:e})")]
    NotConverged {
        iterations: usize,
        gap: f64,
        tolerance: f64,
    },
    #[error("solver failed in round {round}: {source}")]
    RoundFailed {
        round: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("support of size {size} exceeds limit {limit}")]
    SupportTooLarge { size: usize, limit: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
