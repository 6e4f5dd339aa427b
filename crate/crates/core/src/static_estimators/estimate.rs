use crate::baselines::{fit_conditional_variance, lasso_weight, spe_estimate};
use crate::data::{sample_split, StaticDataset};
use crate::error::{Error, Result};
use crate::nuisance::StaticNuisance;

use super::moments::{moment_estimates, MomentEstimates};
use super::report::{EstimateReport, Method};
use super::weights::{
    confidence_interval, estimated_regime, hybrid_select, uncertainty_quantifier,
    weight_nonpessimistic, weight_pessimistic, HybridChoice, Regime,
};

/// How the final estimate combines the two base estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum WeightRule {
    Fixed {
        w: f64,
        choice: Option<HybridChoice>,
    },
    /// Per-context weights; only available with static data.
    Spe { choice: Option<HybridChoice> },
}

pub(crate) fn resolve_weight(
    method: Method,
    learn: &MomentEstimates,
    alpha: f64,
) -> Result<WeightRule> {
    let pessimistic = |m: &MomentEstimates| -> Result<f64> {
        Ok(weight_pessimistic(m, uncertainty_quantifier(m, alpha)?))
    };
    Ok(match method {
        Method::Edo => WeightRule::Fixed {
            w: 1.0,
            choice: None,
        },
        Method::NonPessi => WeightRule::Fixed {
            w: weight_nonpessimistic(learn),
            choice: None,
        },
        Method::Pessi => WeightRule::Fixed {
            w: pessimistic(learn)?,
            choice: None,
        },
        Method::Lasso { lambda } => WeightRule::Fixed {
            w: lasso_weight(learn, lambda)?,
            choice: None,
        },
        Method::Fixed { weight } => {
            if !(0.0..=1.0).contains(&weight) {
                return Err(Error::invalid(
                    "weight",
                    format!("must lie in [0, 1], got {weight}"),
                ));
            }
            WeightRule::Fixed {
                w: weight,
                choice: None,
            }
        }
        Method::Spe => WeightRule::Spe { choice: None },
        Method::Hybrid => match hybrid_select(learn)? {
            HybridChoice::Spe => WeightRule::Spe {
                choice: Some(HybridChoice::Spe),
            },
            HybridChoice::Pessi => WeightRule::Fixed {
                w: pessimistic(learn)?,
                choice: Some(HybridChoice::Pessi),
            },
            HybridChoice::Edo => WeightRule::Fixed {
                w: 1.0,
                choice: Some(HybridChoice::Edo),
            },
            HybridChoice::NonPessi => {
                unreachable!("hybrid_select never picks the non-pessimistic weight")
            }
        },
    })
}

/// Report for τ̂_w = w τ̂_e + (1 - w) τ̂_h with its plug-in variance.
pub(crate) fn fixed_weight_report(
    method: Method,
    w: f64,
    eval: &MomentEstimates,
    regime: Regime,
    alpha: f64,
) -> Result<EstimateReport> {
    let tau_hat = eval.tau_at(w);
    let var_hat = eval.variance_at(w).max(0.0);
    let (ci_lower, ci_upper) = confidence_interval(tau_hat, var_hat, alpha)?;
    Ok(EstimateReport {
        method,
        tau_hat,
        var_hat,
        weight: w,
        bias_hat: eval.b_hat,
        ci_lower,
        ci_upper,
        regime,
        n_e: eval.n_e,
        n_h: eval.n_h,
        cap_breaches: 0,
        choice: None,
    })
}

/// Combination at a fixed weight.
pub fn tau_weighted(
    data: &StaticDataset,
    nu: &StaticNuisance,
    w: f64,
    alpha: f64,
) -> Result<EstimateReport> {
    let m = moment_estimates(data, nu)?;
    let method = Method::Fixed { weight: w };
    match resolve_weight(method, &m, alpha)? {
        WeightRule::Fixed { w, .. } => {
            fixed_weight_report(method, w, &m, estimated_regime(&m), alpha)
        }
        WeightRule::Spe { .. } => unreachable!(),
    }
}

/// End-to-end static estimate. With `split_seed` the weight (and the hybrid
/// choice) is learned on the first half and the estimate is computed on the
/// second half.
pub fn estimate(
    data: &StaticDataset,
    nu: &StaticNuisance,
    method: Method,
    alpha: f64,
    split_seed: Option<u64>,
) -> Result<EstimateReport> {
    let split = split_seed
        .map(|seed| sample_split(data, seed))
        .transpose()?;
    let (learn_data, eval_data) = match &split {
        Some(pair) => (&pair.first_half, &pair.second_half),
        None => (data, data),
    };
    let learn = moment_estimates(learn_data, nu)?;
    let eval = if split.is_some() {
        moment_estimates(eval_data, nu)?
    } else {
        learn
    };
    let regime = estimated_regime(&learn);
    let mut report = match resolve_weight(method, &learn, alpha)? {
        WeightRule::Fixed { w, choice } => {
            let mut r = fixed_weight_report(method, w, &eval, regime, alpha)?;
            r.choice = choice;
            r
        }
        WeightRule::Spe { choice } => {
            let cvm = fit_conditional_variance(learn_data, nu)?;
            let mut r = spe_estimate(eval_data, nu, &cvm, alpha)?;
            r.method = method;
            r.choice = choice;
            r.regime = regime;
            r
        }
    };
    report.weight = report.weight.clamp(0.0, 1.0);
    Ok(report)
}
