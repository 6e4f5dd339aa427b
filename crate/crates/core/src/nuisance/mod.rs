//! Nuisance functions behind every score: outcome models, propensities,
//! covariate-shift ratios, value functions and state density ratios.

mod sequential;
mod static_models;

pub use sequential::*;
pub use static_models::*;

/// Default floor for propensities and ratio clipping.
pub const DEFAULT_CLIP: f64 = 1e-3;
