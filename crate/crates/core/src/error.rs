//! Error types shared across the toolkit.

use thiserror::Error;

/// Failures of the dense linear-algebra kernel.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("empty matrix ({rows}x{cols})")]
    Empty { rows: usize, cols: usize },
    #[error("data length mismatch: expected {expected}, got {got}")]
    InvalidData { expected: usize, got: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix is singular or too ill-conditioned to invert")]
    Singular,
    #[error("certificate precondition violated: {0}")]
    Precondition(String),
    #[error("rank deficient: rank {rank} < required {required}")]
    RankDeficient { rank: usize, required: usize },
}

/// Failures when building or partitioning a plant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("measurement matrix must have fewer rows than states (m = {m}, n = {n})")]
    NotPartial { m: usize, n: usize },
    #[error("transformation [C; M] is ill-conditioned (scaled |det| = {det:e})")]
    IllConditioned { det: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("nonlinearity returned non-finite value at {at:?}")]
    NonFinite { at: Vec<f64> },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Failures of the dissipativity certificates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("certificate precondition violated: {0}")]
    Precondition(String),
    #[error("certificate infeasible: {0}")]
    Infeasible(String),
    #[error("evaluator returned a non-finite value at z = {z:?}, eps = {eps:?}")]
    NonFinite { z: Vec<f64>, eps: Vec<f64> },
    #[error("invalid sampling box: {0}")]
    SampleBox(String),
}

/// Failures of the scalar sampling-window design.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("correction gain must be diagonal")]
    NonDiagonalGain,
    #[error("correction gain entry l[{index}] = {value} gives no contraction (|1 - l| must lie in (0, 1))")]
    NoContraction { index: usize, value: f64 },
    #[error("jump contraction gamma = {0} outside (0, 1)")]
    Gamma(f64),
    #[error("ISS gain alpha = {alpha} must exceed gamma = {gamma}")]
    IssGain { alpha: f64, gamma: f64 },
    #[error("net decay kappa = {0} must be positive")]
    Kappa(f64),
    #[error("sampling interval must be positive, got {0}")]
    Interval(f64),
    #[error("maximum-interval denominator is not positive ({0})")]
    Denominator(f64),
    #[error("infeasible sampling window: t_min = {t_min} >= t_max = {t_max}")]
    InfeasibleWindow { t_min: f64, t_max: f64 },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<crate::Error>,
    },
    #[error("missing certificate: {0}")]
    MissingCertificate(&'static str),
}

/// Failures of the ODE integrator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("invalid time span [{t0}, {t1}]")]
    Span { t0: f64, t1: f64 },
    #[error("step size underflow at t = {t} (last good time)")]
    StepUnderflow { t: f64 },
    #[error("maximum number of steps exceeded at t = {t}")]
    TooManySteps { t: f64 },
    #[error("vector field returned a non-finite value at t = {t}")]
    NonFinite { t: f64 },
}

/// Failures of the impulsive simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("integration failed on [{t0}, {t1}]: {source}")]
    Integration {
        t0: f64,
        t1: f64,
        #[source]
        source: IntegrationError,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("empty sampling window ({t_min}, {t_max})")]
    EmptyWindow { t_min: f64, t_max: f64 },
    #[error("noise stream has {have} samples but the schedule needs {need}")]
    NoiseTooShort { have: usize, need: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("trace is missing data: {0}")]
    MissingData(String),
}

/// Top-level error for the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
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

pub type Result<T, E = Error> = std::result::Result<T, E>;
