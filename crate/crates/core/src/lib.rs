//! Weighted doubly robust estimation of average treatment effects that
//! borrows strength from a historical control-only dataset.
//!
//! The non-dynamic setting lives in [`static_estimators`], the finite-horizon
//! sequential setting in [`sequential_estimators`]. Both share one weighting
//! machinery: the plug-in MSE-minimizing weight, its pessimistic variant, and
//! a hybrid rule that picks between them from the estimated reward shift.

pub mod baselines;
pub mod data;
pub mod error;
pub mod io;
pub mod linalg;
pub mod nuisance;
pub mod sequential_estimators;
pub mod simulation;
pub mod static_estimators;

pub use data::{
    sample_split, Arm, ContextVector, Episode, ExperimentalRecord, HistoricalRecord,
    SequentialDataset, SplitPair, Splittable, StaticDataset, Step,
};
pub use error::{Error, ErrorCategory, Result};
pub use static_estimators::{EstimateReport, Method, MomentEstimates, Regime};
