use thiserror::Error;

use crate::train::TrainHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{lo}, {hi}]: bounds must be finite with lo < hi")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("degree {0} exceeds the supported maximum of {max}", max = crate::bernstein::MAX_DEGREE)]
    DegreeTooLarge(usize),

    #[error("basis index {k} out of range for degree {n}")]
    IndexOutOfRange { n: usize, k: usize },

    #[error("point {x} lies outside the domain [{lo}, {hi}]")]
    OutsideDomain { x: f64, lo: f64, hi: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("cannot represent a degree {degree} polynomial with degree {target}")]
    DegreeReduction { degree: usize, target: usize },

    #[error("derivative of order {m} vanishes at {x0}; the root is not of multiplicity {m}")]
    MultiplicityMismatch { x0: f64, m: usize },

    #[error("perturbation magnitude must be non-negative, got {0}")]
    NegativeEpsilon(f64),

    #[error("coefficients are not strictly increasing")]
    NotMonotone,

    #[error("target {x} is outside the polynomial range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },

    #[error("root finder exhausted {max_iter} iterations (residual {residual:e})")]
    MaxIterations { max_iter: usize, residual: f64 },

    #[error("dimension {dim}: {source}")]
    InDimension {
        dim: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sample {index}: {source}")]
    InSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset has zero spread in dimension {0}")]
    ZeroSpread(usize),

    #[error("unknown dataset name {0:?}")]
    UnknownDataset(String),

    #[error("csv row {row}, column {column}: {message}")]
    CsvCell { row: usize, column: usize, message: String },

    #[error("csv input is empty")]
    EmptyCsv,

    #[error("non-finite loss for {consecutive} consecutive iterations, aborting at iteration {iteration}")]
    TrainingAborted {
        iteration: usize,
        consecutive: usize,
        history: Box<TrainHistory>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_dimension(self, dim: usize) -> Self {
        Error::InDimension {
            dim,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_sample(self, index: usize) -> Self {
        Error::InSample {
            index,
            source: Box::new(self),
        }
    }

    /// True for failures caused by floating-point behaviour rather than bad
    /// input (used by the CLI to choose an exit code).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite(_)
            | Error::MaxIterations { .. }
            | Error::MultiplicityMismatch { .. }
            | Error::TrainingAborted { .. } => true,
            Error::InDimension { source, .. } | Error::InSample { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
