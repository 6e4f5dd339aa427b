use crate::data::{Arm, ExperimentalRecord, HistoricalRecord, StaticDataset};
use crate::nuisance::StaticNuisance;

use super::moments::PsiValues;

/// r_e(a, S) + ν^a [R - r_e(A, S)] with ν^a = 1(A = a) / π(a | S).
pub(crate) fn arm_score(rec: &ExperimentalRecord, nu: &StaticNuisance, arm: Arm) -> f64 {
    let s = rec.context.as_slice();
    let base = nu.reward.eval(arm, s);
    if rec.action == arm {
        base + (rec.reward - nu.reward.eval(rec.action, s)) / nu.propensity.prob(arm, s)
    } else {
        base
    }
}

/// Doubly robust score of the treatment effect on one experimental record.
pub fn psi_e(rec: &ExperimentalRecord, nu: &StaticNuisance) -> f64 {
    Arm::BOTH
        .iter()
        .map(|&a| a.sign() * arm_score(rec, nu, a))
        .sum()
}

/// Experimental half of the historical-data score: target-arm value minus r_h.
pub fn psi_h1(rec: &ExperimentalRecord, nu: &StaticNuisance) -> f64 {
    arm_score(rec, nu, Arm::Treatment) - nu.hist_reward.eval(rec.context.as_slice())
}

/// Historical residual weighted by the covariate-shift ratio.
pub fn psi_h2(rec: &HistoricalRecord, nu: &StaticNuisance) -> f64 {
    let s = rec.context.as_slice();
    nu.density_ratio.eval(s) * (rec.reward - nu.hist_reward.eval(s))
}

pub fn psi_values(data: &StaticDataset, nu: &StaticNuisance) -> PsiValues {
    let exp = data.experimental();
    PsiValues {
        e: exp.iter().map(|r| psi_e(r, nu)).collect(),
        h1: exp.iter().map(|r| psi_h1(r, nu)).collect(),
        h2: data.historical().iter().map(|r| psi_h2(r, nu)).collect(),
    }
}

/// Experimental-only estimator: mean of ψ_e.
pub fn tau_e(data: &StaticDataset, nu: &StaticNuisance) -> f64 {
    psi_values(data, nu).tau_e()
}

/// Historical-control estimator: mean ψ_h1 over D_e minus mean ψ_h2 over D_h.
pub fn tau_h(data: &StaticDataset, nu: &StaticNuisance) -> f64 {
    psi_values(data, nu).tau_h()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::LinearFn;
    use crate::nuisance::{
        known_propensity, DensityRatioModel, HistoricalRewardModel, RewardModel,
    };

    fn ipw_nuisance() -> StaticNuisance {
        StaticNuisance {
            reward: RewardModel::Zero,
            hist_reward: HistoricalRewardModel::Zero,
            propensity: known_propensity(0.5, 1e-3).unwrap(),
            density_ratio: DensityRatioModel::Constant1,
        }
    }

    fn rec(s: f64, a: Arm, r: f64) -> ExperimentalRecord {
        ExperimentalRecord::new(s.into(), a, r).unwrap()
    }

    #[test]
    fn ipw_forms() {
        let nu = ipw_nuisance();
        assert_eq!(psi_e(&rec(0.7, Arm::Treatment, 2.0), &nu), 4.0);
        assert_eq!(psi_h1(&rec(0.7, Arm::Treatment, 2.0), &nu), 4.0);
        let h = HistoricalRecord::new(0.4.into(), 3.0).unwrap();
        assert_eq!(psi_h2(&h, &nu), 3.0);
    }

    #[test]
    fn control_record_has_no_target_correction() {
        let mut nu = ipw_nuisance();
        nu.hist_reward = HistoricalRewardModel::Linear(LinearFn {
            intercept: 0.0,
            slopes: vec![1.0],
        });
        assert!((psi_h1(&rec(0.3, Arm::Control, 17.0), &nu) + 0.3).abs() < 1e-15);
        let h = HistoricalRecord::new(1.0.into(), 1.0).unwrap();
        assert_eq!(psi_h2(&h, &nu), 0.0);
    }

    #[test]
    fn augmentation_vanishes_on_exact_outcome() {
        let mut nu = ipw_nuisance();
        nu.reward = RewardModel::Linear {
            control: LinearFn {
                intercept: 1.0,
                slopes: vec![0.5],
            },
            treatment: LinearFn {
                intercept: 3.0,
                slopes: vec![-1.0],
            },
        };
        let s = 0.8;
        let r = 3.0 - s;
        let want = (3.0 - s) - (1.0 + 0.5 * s);
        assert!((psi_e(&rec(s, Arm::Treatment, r), &nu) - want).abs() < 1e-14);
    }
}
