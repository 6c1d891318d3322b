use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("not a probability vector: {0}")]
    NotAProbabilityVector(String),

    #[error("negative kernel entry a[{row}][{col}] = {value}")]
    NegativeKernelEntry { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("invalid continuous space: {0}")]
    InvalidSpace(String),

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("invalid graph state: {0}")]
    InvalidState(String),

    #[error("zero attractiveness towards location {location} at step {step}")]
    ZeroAttractiveness { location: usize, step: u64 },

    #[error("density sampling failed: {0}")]
    DensitySamplingFailure(String),

    #[error(
        "coupling violated at step {step}: cell {cell} has dustbin total {dustbin} > continuous total {continuous}"
    )]
    CouplingViolation {
        step: u64,
        cell: usize,
        dustbin: u64,
        continuous: u64,
    },

    #[error("graph has no edge ends")]
    EmptyGraph,

    #[error("point on the simplex boundary: y[{index}] = {value}")]
    BoundaryPoint { index: usize, value: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("kernel row or column {index} is identically zero")]
    ZeroKernelRow { index: usize },

    #[error("location {index} has zero mass")]
    DegenerateMass { index: usize },

    #[error("no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("degree {d} is below the minimum degree m = {m}")]
    DegreeBelowM { d: u64, m: u64 },

    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("operation requires the fit-get-richer phase")]
    WrongPhase,

    #[error("interval [{a}, {b}] outside [0, {h})")]
    IntervalOutOfRange { a: f64, b: f64, h: f64 },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
