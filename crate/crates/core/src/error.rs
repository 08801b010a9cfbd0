use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension {0} is not a power of two >= 2")]
    NotPowerOfTwo(usize),

    #[error("dimension {d} exceeds the {cap} cap for {what}")]
    OverCap { d: usize, cap: usize, what: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("index {name} = {value} is out of range (limit {limit})")]
    IndexOutOfRange {
        name: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("trace is {0}, expected 1")]
    BadTrace(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("negative probability {0:e} beyond clipping tolerance")]
    NegativeProbability(f64),

    #[error("probability table sums to {0}, expected 1")]
    TableNotNormalized(f64),

    #[error("count record has zero total events")]
    ZeroTotal,

    #[error("tomography record: {0}")]
    Tomography(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
