//! Comparison estimators: the per-context efficient-weight (SPE) estimator
//! built for the no-shift case, and an l1-penalized weight.

use serde::{Deserialize, Serialize};

use crate::data::{Arm, StaticDataset};
use crate::error::{Error, Result};
use crate::linalg::{fit_affine, LinearFn};
use crate::nuisance::StaticNuisance;
use crate::static_estimators::{
    confidence_interval, estimate, estimated_regime, mean, mean_cov, psi_values, EstimateReport,
    Method, MomentEstimates, DEGENERATE_DENOMINATOR,
};

pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Var(R_e | A_e = 0, s) and Var(R_h | s) as affine functions of s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalVarianceModel {
    pub experimental_control: LinearFn,
    pub historical: LinearFn,
}

impl ConditionalVarianceModel {
    pub fn experimental(&self, s: &[f64]) -> f64 {
        self.experimental_control.eval(s).max(VARIANCE_FLOOR)
    }

    pub fn historical(&self, s: &[f64]) -> f64 {
        self.historical.eval(s).max(VARIANCE_FLOOR)
    }
}

/// Regress squared outcome-model residuals on (1, s), on control-arm
/// experimental records and on historical records.
pub fn fit_conditional_variance(
    data: &StaticDataset,
    nu: &StaticNuisance,
) -> Result<ConditionalVarianceModel> {
    let dim = data.context_dim();
    let control: Vec<_> = data
        .experimental()
        .iter()
        .filter(|r| r.action == Arm::Control)
        .collect();
    let xs: Vec<&[f64]> = control.iter().map(|r| r.context.as_slice()).collect();
    let ys: Vec<f64> = control
        .iter()
        .map(|r| (r.reward - nu.reward.eval(Arm::Control, r.context.as_slice())).powi(2))
        .collect();
    let experimental_control = fit_affine(
        &xs,
        &ys,
        dim,
        "conditional variance, experimental control arm",
    )?;
    let xs: Vec<&[f64]> = data
        .historical()
        .iter()
        .map(|r| r.context.as_slice())
        .collect();
    let ys: Vec<f64> = data
        .historical()
        .iter()
        .map(|r| (r.reward - nu.hist_reward.eval(r.context.as_slice())).powi(2))
        .collect();
    let historical = fit_affine(&xs, &ys, dim, "conditional variance, historical")?;
    Ok(ConditionalVarianceModel {
        experimental_control,
        historical,
    })
}

/// w_EB(s) = n_e μ(s) π(0|s) / (n_e μ(s) π(0|s) + n_h v_e(s) / v_h(s)).
pub fn spe_weight(
    s: &[f64],
    n_e: usize,
    n_h: usize,
    nu: &StaticNuisance,
    cvm: &ConditionalVarianceModel,
) -> f64 {
    let a = n_e as f64 * nu.density_ratio.eval(s) * nu.propensity.prob(Arm::Control, s);
    let b = n_h as f64 * cvm.experimental(s) / cvm.historical(s);
    a / (a + b)
}

/// Combination with a context-dependent weight w(s): the target-arm part is
/// untouched, the control-arm correction is split between the experimental
/// residual (weight w) and the historical residual (weight 1 - w).
pub fn context_weighted_estimate(
    data: &StaticDataset,
    nu: &StaticNuisance,
    weight: impl Fn(&[f64]) -> f64,
    method: Method,
    alpha: f64,
) -> Result<EstimateReport> {
    let psi = psi_values(data, nu);
    let m: MomentEstimates = psi.moments()?;
    let w_e: Vec<f64> = data
        .experimental()
        .iter()
        .map(|r| weight(r.context.as_slice()))
        .collect();
    let infl_e: Vec<f64> = w_e
        .iter()
        .zip(psi.e.iter().zip(&psi.h1))
        .map(|(w, (e, h1))| w * e + (1.0 - w) * h1)
        .collect();
    let infl_h: Vec<f64> = data
        .historical()
        .iter()
        .zip(&psi.h2)
        .map(|(r, h2)| (1.0 - weight(r.context.as_slice())) * h2)
        .collect();
    let tau_hat = mean(&infl_e) - mean(&infl_h);
    let var_hat = mean_cov(&infl_e, &infl_e) + mean_cov(&infl_h, &infl_h);
    let (ci_lower, ci_upper) = confidence_interval(tau_hat, var_hat, alpha)?;
    Ok(EstimateReport {
        method,
        tau_hat,
        var_hat,
        weight: mean(&w_e),
        bias_hat: m.b_hat,
        ci_lower,
        ci_upper,
        regime: estimated_regime(&m),
        n_e: m.n_e,
        n_h: m.n_h,
        cap_breaches: 0,
        choice: None,
    })
}

pub fn spe_estimate(
    data: &StaticDataset,
    nu: &StaticNuisance,
    cvm: &ConditionalVarianceModel,
    alpha: f64,
) -> Result<EstimateReport> {
    let (n_e, n_h) = (data.experimental().len(), data.historical().len());
    context_weighted_estimate(
        data,
        nu,
        |s| spe_weight(s, n_e, n_h, nu, cvm),
        Method::Spe,
        alpha,
    )
}

/// argmin over [0, 1] of w²V̂_e + (1-w)²V̂_h + 2w(1-w)Ĉov + λ|1 - w|.
pub fn lasso_weight(m: &MomentEstimates, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(
            "lambda",
            format!("must be a finite non-negative number, got {lambda}"),
        ));
    }
    let den = m.var_e + m.var_h - 2.0 * m.cov_eh;
    if den <= DEGENERATE_DENOMINATOR {
        return Ok(1.0);
    }
    Ok(((m.var_h - m.cov_eh + lambda / 2.0) / den).clamp(0.0, 1.0))
}

pub fn lasso_estimate(
    data: &StaticDataset,
    nu: &StaticNuisance,
    lambda: f64,
    alpha: f64,
) -> Result<EstimateReport> {
    estimate(data, nu, Method::Lasso { lambda }, alpha, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::{
        known_propensity, DensityRatioModel, HistoricalRewardModel, RewardModel,
    };

    fn moments(var_e: f64, var_h: f64, cov: f64) -> MomentEstimates {
        MomentEstimates {
            var_e,
            var_h,
            cov_eh: cov,
            b_hat: 0.0,
            tau_e: 0.0,
            tau_h: 0.0,
            n_e: 10,
            n_h: 10,
        }
    }

    #[test]
    fn lasso_cases() {
        let m = moments(1.0, 1.0, 0.0);
        assert_eq!(lasso_weight(&m, 0.0).unwrap(), 0.5);
        assert_eq!(lasso_weight(&m, 1.0).unwrap(), 0.75);
        assert_eq!(lasso_weight(&m, 1e6).unwrap(), 1.0);
        assert!(lasso_weight(&m, -1.0).is_err());
    }

    #[test]
    fn equal_variances_give_one_third() {
        let nu = StaticNuisance {
            reward: RewardModel::Zero,
            hist_reward: HistoricalRewardModel::Zero,
            propensity: known_propensity(0.5, 1e-3).unwrap(),
            density_ratio: DensityRatioModel::Constant1,
        };
        let cvm = ConditionalVarianceModel {
            experimental_control: LinearFn::constant(2.0, 1),
            historical: LinearFn::constant(2.0, 1),
        };
        let w = spe_weight(&[0.3], 50, 50, &nu, &cvm);
        assert!((w - 1.0 / 3.0).abs() < 1e-15);
        let w_big = spe_weight(&[0.3], 50, 50_000_000, &nu, &cvm);
        assert!(w_big < 1e-6 && w_big > 0.0);
    }
}
