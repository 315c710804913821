use thiserror::Error;

use crate::validation::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rate must be finite and non-negative, got {0}")]
    InvalidRate(f64),

    #[error("probability {value} outside {range}")]
    InvalidProbability { value: f64, range: &'static str },

    #[error("hazard ratio must be finite and positive, got {0}")]
    InvalidHazardRatio(f64),

    #[error("cycle length must be finite and positive, got {0}")]
    InvalidCycleLength(f64),

    #[error("Weibull {name} must be finite and positive, got {value}")]
    InvalidWeibull { name: &'static str, value: f64 },

    #[error("unknown state label `{0}`")]
    UnknownState(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("life table coverage: no mortality rate for age {0}")]
    LifeTableCoverage(u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model structure: {0}")]
    Model(String),

    #[error("invalid transition array:\n{0}")]
    InvalidArray(ValidationReport),

    #[error("invalid model specification:\n{0}")]
    InvalidSpec(ValidationReport),

    #[error("distribution for `{name}`: {reason}")]
    Distribution { name: String, reason: String },

    #[error("sample {sample}: no valid parameter set after {attempts} draws")]
    RetryCapExceeded { sample: usize, attempts: usize },

    #[error("sample {sample}: {source}")]
    Sample {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the error stems from reading or writing files rather than
    /// from the model itself.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_))
    }

    /// True when the error is a rejected model or input (as opposed to I/O).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io(_) | Error::Csv(_) => false,
            Error::Sample { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}
