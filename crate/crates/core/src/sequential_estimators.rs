//! Finite-horizon estimators: per-episode doubly robust scores built from
//! value functions and state density ratios, combined with the same
//! weighting rules as the non-dynamic setting.

use rayon::prelude::*;

use crate::data::{sample_split, Arm, Episode, SequentialDataset};
use crate::error::{Error, Result};
use crate::nuisance::SequentialNuisance;
use crate::static_estimators::{
    estimated_regime, fixed_weight_report, resolve_weight, weight_nonpessimistic, EstimateReport,
    HybridChoice, Method, MomentEstimates, PsiValues, WeightRule,
};

/// V^a_{e,1}(S_1) + Σ_t μ_t^a [R_t + V^a_{e,t+1}(S_{t+1}) - V^a_{e,t}(S_t)].
pub(crate) fn arm_part(ep: &Episode, nu: &SequentialNuisance, arm: Arm) -> f64 {
    let v = &nu.values;
    let mu = nu.ratios.experimental_ratios(ep, arm);
    let mut total = v.experimental(arm, 1, ep.state(1));
    for (i, step) in ep.steps().iter().enumerate() {
        let t = i + 1;
        if mu[i] == 0.0 {
            continue;
        }
        let td = step.reward + v.experimental(arm, t + 1, ep.state(t + 1))
            - v.experimental(arm, t, ep.state(t));
        total += mu[i] * td;
    }
    total
}

pub fn psi_e_seq(ep: &Episode, nu: &SequentialNuisance) -> f64 {
    arm_part(ep, nu, Arm::Treatment) - arm_part(ep, nu, Arm::Control)
}

/// Target-arm part minus V_{h,1} at the experimental initial state.
pub fn psi_h1_seq(ep: &Episode, nu: &SequentialNuisance) -> f64 {
    arm_part(ep, nu, Arm::Treatment) - nu.values.historical(1, ep.state(1))
}

/// Σ_t μ_t^h(S_t) [R_t + V_{h,t+1}(S_{t+1}) - V_{h,t}(S_t)] on a historical episode.
pub fn psi_h2_seq(ep: &Episode, nu: &SequentialNuisance) -> f64 {
    let v = &nu.values;
    ep.steps()
        .iter()
        .enumerate()
        .map(|(i, step)| {
            let t = i + 1;
            let s = ep.state(t);
            nu.ratios.historical_ratio(t, s)
                * (step.reward + v.historical(t + 1, ep.state(t + 1)) - v.historical(t, s))
        })
        .sum()
}

/// Per-episode scores plus the number of values that hit the magnitude cap.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialPsiValues {
    pub psi: PsiValues,
    pub cap: f64,
    pub cap_breaches: usize,
}

/// Scores for every episode. Each value is capped at T R_max / clip in
/// magnitude, where R_max is the largest observed |reward|.
pub fn psi_values_seq(
    data: &SequentialDataset,
    nu: &SequentialNuisance,
) -> Result<SequentialPsiValues> {
    if data.horizon() != nu.values.horizon() {
        return Err(Error::HorizonMismatch {
            data: data.horizon(),
            nuisance: nu.values.horizon(),
        });
    }
    let cap = data.horizon() as f64 * data.max_abs_reward() / nu.ratios.clip;
    let exp: Vec<(f64, f64)> = data
        .experimental()
        .par_iter()
        .map(|ep| (psi_e_seq(ep, nu), psi_h1_seq(ep, nu)))
        .collect();
    let h2: Vec<f64> = data
        .historical()
        .par_iter()
        .map(|ep| psi_h2_seq(ep, nu))
        .collect();
    let mut breaches = 0;
    let mut capped = |x: f64| {
        if cap > 0.0 && x.abs() > cap {
            breaches += 1;
            x.clamp(-cap, cap)
        } else {
            x
        }
    };
    let mut psi = PsiValues::default();
    for (e, h1) in exp {
        psi.e.push(capped(e));
        psi.h1.push(capped(h1));
    }
    psi.h2 = h2.into_iter().map(&mut capped).collect();
    Ok(SequentialPsiValues {
        psi,
        cap,
        cap_breaches: breaches,
    })
}

pub fn tau_e_seq(data: &SequentialDataset, nu: &SequentialNuisance) -> Result<f64> {
    Ok(psi_values_seq(data, nu)?.psi.tau_e())
}

pub fn tau_h_seq(data: &SequentialDataset, nu: &SequentialNuisance) -> Result<f64> {
    Ok(psi_values_seq(data, nu)?.psi.tau_h())
}

pub fn moment_estimates_seq(
    data: &SequentialDataset,
    nu: &SequentialNuisance,
) -> Result<MomentEstimates> {
    psi_values_seq(data, nu)?.psi.moments()
}

/// Sequential counterpart of [`crate::static_estimators::estimate`]. SPE has
/// no sequential form; the hybrid rule uses the non-pessimistic weight where
/// it would pick SPE.
pub fn estimate_seq(
    data: &SequentialDataset,
    nu: &SequentialNuisance,
    method: Method,
    alpha: f64,
    split_seed: Option<u64>,
) -> Result<EstimateReport> {
    if method == Method::Spe {
        return Err(Error::invalid(
            "method",
            "spe is only defined for non-dynamic data",
        ));
    }
    let split = split_seed
        .map(|seed| sample_split(data, seed))
        .transpose()?;
    let (learn_data, eval_data) = match &split {
        Some(pair) => (&pair.first_half, &pair.second_half),
        None => (data, data),
    };
    let learn_psi = psi_values_seq(learn_data, nu)?;
    let learn = learn_psi.psi.moments()?;
    let (eval, breaches) = if split.is_some() {
        let p = psi_values_seq(eval_data, nu)?;
        (p.psi.moments()?, learn_psi.cap_breaches + p.cap_breaches)
    } else {
        (learn, learn_psi.cap_breaches)
    };
    let (w, choice) = match resolve_weight(method, &learn, alpha)? {
        WeightRule::Fixed { w, choice } => (w, choice),
        WeightRule::Spe { .. } => (weight_nonpessimistic(&learn), Some(HybridChoice::NonPessi)),
    };
    let mut report = fixed_weight_report(method, w, &eval, estimated_regime(&learn), alpha)?;
    report.choice = choice;
    report.cap_breaches = breaches;
    Ok(report)
}
