use std::path::PathBuf;

use thiserror::Error;

use crate::data::Arm;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Data,
    Numerical,
    Config,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("malformed header in {which}: {reason}")]
    Header { which: &'static str, reason: String },

    #[error("non-binary action at row {row}: {value:?}")]
    NonBinaryAction { row: usize, value: String },

    #[error("non-numeric field at row {row}, column {column:?}: {value:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-finite value at row {row}, column {column:?}")]
    NonFinite { row: usize, column: String },

    #[error("inconsistent dimension at row {row}: expected {expected} fields, found {found}")]
    InconsistentDimension {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("historical action must be 0 (row {row})")]
    HistoricalAction { row: usize },

    #[error("inconsistent horizon: episode {episode} has T={found}, expected T={expected}")]
    InconsistentHorizon {
        episode: String,
        expected: usize,
        found: usize,
    },

    #[error("malformed episode {episode}: {reason}")]
    MalformedEpisode { episode: String, reason: String },

    #[error("experimental data must contain both arms; arm {0} is missing")]
    MissingArm(Arm),

    #[error("too few records for arm {arm}: need at least {needed}, found {found}")]
    TooFewRecords {
        arm: Arm,
        needed: usize,
        found: usize,
    },

    #[error("rank-deficient design for {0}")]
    RankDeficient(String),

    #[error("logistic fit did not converge ({0})")]
    LogisticNonConvergence(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("no experimental steps with action {arm} at t={t}")]
    NoStepsForArm { arm: Arm, t: usize },

    #[error("at least {needed} observations are required, found {found}")]
    InsufficientSample { needed: usize, found: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("horizon mismatch: data has T={data}, nuisance expects T={nuisance}")]
    HorizonMismatch { data: usize, nuisance: usize },

    #[error("treatment-effect calibration failed: {0}")]
    Calibration(String),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. }
            | Error::EmptyDataset(_)
            | Error::Header { .. }
            | Error::NonBinaryAction { .. }
            | Error::NonNumeric { .. }
            | Error::NonFinite { .. }
            | Error::InconsistentDimension { .. }
            | Error::HistoricalAction { .. }
            | Error::InconsistentHorizon { .. }
            | Error::MalformedEpisode { .. }
            | Error::MissingArm(_)
            | Error::TooFewRecords { .. }
            | Error::NoStepsForArm { .. }
            | Error::InsufficientSample { .. }
            | Error::HorizonMismatch { .. } => ErrorCategory::Data,
            Error::RankDeficient(_)
            | Error::LogisticNonConvergence(_)
            | Error::Singular(_)
            | Error::Calibration(_) => ErrorCategory::Numerical,
            Error::InvalidParameter { .. } => ErrorCategory::Config,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
