//! Non-dynamic estimators: doubly robust scores, the two base estimators,
//! their sampling moments, and the weighted combinations built on them.

mod estimate;
mod moments;
mod psi;
mod report;
mod weights;

pub use estimate::{estimate, tau_weighted};
pub(crate) use estimate::{fixed_weight_report, resolve_weight, WeightRule};
pub(crate) use moments::{mean, mean_cov};
pub use moments::{moment_estimates, MomentEstimates, PsiValues};
pub use psi::{psi_e, psi_h1, psi_h2, psi_values, tau_e, tau_h};
pub use report::{EstimateReport, Method};
pub use weights::{
    classify_regime, confidence_interval, estimated_regime, hybrid_c2, hybrid_select,
    uncertainty_quantifier, weight_for_bias_sq, weight_nonpessimistic, weight_pessimistic,
    HybridChoice, Regime, DEGENERATE_DENOMINATOR, HYBRID_C1,
};
