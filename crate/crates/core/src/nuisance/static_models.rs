use serde::{Deserialize, Serialize};

use crate::data::{Arm, ExperimentalRecord, HistoricalRecord};
use crate::error::{Error, Result};
use crate::linalg::{fit_affine, fit_logistic, LinearFn};

use super::DEFAULT_CLIP;

/// Per-arm outcome model r_e(a, s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RewardModel {
    /// r_e identically zero, which turns the doubly robust score into plain IPW.
    Zero,
    Linear {
        control: LinearFn,
        treatment: LinearFn,
    },
}

impl RewardModel {
    pub fn eval(&self, arm: Arm, s: &[f64]) -> f64 {
        match self {
            RewardModel::Zero => 0.0,
            RewardModel::Linear { control, treatment } => match arm {
                Arm::Control => control.eval(s),
                Arm::Treatment => treatment.eval(s),
            },
        }
    }

    pub fn arm(&self, arm: Arm, dim: usize) -> LinearFn {
        match self {
            RewardModel::Zero => LinearFn::zero(dim),
            RewardModel::Linear { control, treatment } => match arm {
                Arm::Control => control.clone(),
                Arm::Treatment => treatment.clone(),
            },
        }
    }
}

/// Historical outcome model r_h(s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HistoricalRewardModel {
    Zero,
    Linear(LinearFn),
}

impl HistoricalRewardModel {
    pub fn eval(&self, s: &[f64]) -> f64 {
        match self {
            HistoricalRewardModel::Zero => 0.0,
            HistoricalRewardModel::Linear(f) => f.eval(s),
        }
    }
}

/// Per-arm OLS of reward on `(1, s)`. Each arm needs at least `d + 2` records.
pub fn fit_reward_model(records: &[ExperimentalRecord]) -> Result<RewardModel> {
    let dim = records
        .first()
        .map(|r| r.context.dim())
        .ok_or(Error::EmptyDataset("experimental"))?;
    let mut fits = Vec::with_capacity(2);
    for arm in Arm::BOTH {
        let sub: Vec<&ExperimentalRecord> = records.iter().filter(|r| r.action == arm).collect();
        if sub.len() < dim + 2 {
            return Err(Error::TooFewRecords {
                arm,
                needed: dim + 2,
                found: sub.len(),
            });
        }
        let xs: Vec<&[f64]> = sub.iter().map(|r| r.context.as_slice()).collect();
        let ys: Vec<f64> = sub.iter().map(|r| r.reward).collect();
        fits.push(fit_affine(
            &xs,
            &ys,
            dim,
            &format!("reward model, arm {arm}"),
        )?);
    }
    let treatment = fits.pop().unwrap();
    let control = fits.pop().unwrap();
    Ok(RewardModel::Linear { control, treatment })
}

pub fn fit_historical_reward_model(records: &[HistoricalRecord]) -> Result<HistoricalRewardModel> {
    let dim = records
        .first()
        .map(|r| r.context.dim())
        .ok_or(Error::EmptyDataset("historical"))?;
    if records.len() < dim + 2 {
        return Err(Error::InsufficientSample {
            needed: dim + 2,
            found: records.len(),
        });
    }
    let xs: Vec<&[f64]> = records.iter().map(|r| r.context.as_slice()).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.reward).collect();
    Ok(HistoricalRewardModel::Linear(fit_affine(
        &xs,
        &ys,
        dim,
        "historical reward model",
    )?))
}

/// Behavior probabilities π(a | s), clipped to `[clip, 1 - clip]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PropensityModel {
    Constant { p1: f64, clip: f64 },
    Logistic { coef: LinearFn, clip: f64 },
}

impl PropensityModel {
    pub fn prob(&self, arm: Arm, s: &[f64]) -> f64 {
        let (p1, clip) = match self {
            PropensityModel::Constant { p1, clip } => (*p1, *clip),
            PropensityModel::Logistic { coef, clip } => (logistic(coef.eval(s)), *clip),
        };
        let p1 = p1.clamp(clip, 1.0 - clip);
        match arm {
            Arm::Treatment => p1,
            Arm::Control => 1.0 - p1,
        }
    }

    pub fn clip(&self) -> f64 {
        match self {
            PropensityModel::Constant { clip, .. } | PropensityModel::Logistic { clip, .. } => {
                *clip
            }
        }
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn check_clip(clip: f64) -> Result<()> {
    if clip > 0.0 && clip < 0.5 {
        Ok(())
    } else {
        Err(Error::invalid(
            "clip",
            format!("must lie in (0, 0.5), got {clip}"),
        ))
    }
}

pub fn known_propensity(p1: f64, clip: f64) -> Result<PropensityModel> {
    check_clip(clip)?;
    if !(p1 > 0.0 && p1 < 1.0) {
        return Err(Error::invalid(
            "p1",
            format!("must lie in (0, 1), got {p1}"),
        ));
    }
    Ok(PropensityModel::Constant { p1, clip })
}

pub fn fit_propensity(records: &[ExperimentalRecord], clip: f64) -> Result<PropensityModel> {
    check_clip(clip)?;
    let dim = records
        .first()
        .map(|r| r.context.dim())
        .ok_or(Error::EmptyDataset("experimental"))?;
    for arm in Arm::BOTH {
        if !records.iter().any(|r| r.action == arm) {
            return Err(Error::MissingArm(arm));
        }
    }
    let xs: Vec<&[f64]> = records.iter().map(|r| r.context.as_slice()).collect();
    let labels: Vec<bool> = records.iter().map(|r| r.action == Arm::Treatment).collect();
    let coef = fit_logistic(&xs, &labels, dim, "propensity")?;
    Ok(PropensityModel::Logistic { coef, clip })
}

/// Covariate-shift ratio μ(s) = p_e(s) / p_h(s), clipped to `[clip, 1/clip]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DensityRatioModel {
    Constant1,
    /// `scale` is |D_h| / |D_e|, converting classifier odds to a density ratio.
    Logistic {
        coef: LinearFn,
        scale: f64,
        clip: f64,
    },
}

impl DensityRatioModel {
    pub fn eval(&self, s: &[f64]) -> f64 {
        match self {
            DensityRatioModel::Constant1 => 1.0,
            DensityRatioModel::Logistic { coef, scale, clip } => {
                (scale * coef.eval(s).exp()).clamp(*clip, 1.0 / clip)
            }
        }
    }
}

/// Logistic discrimination of experimental (label 1) against historical
/// contexts.
pub fn fit_density_ratio_static(
    exp: &[&[f64]],
    hist: &[&[f64]],
    clip: f64,
) -> Result<DensityRatioModel> {
    check_clip(clip)?;
    if exp.is_empty() {
        return Err(Error::EmptyDataset("experimental"));
    }
    if hist.is_empty() {
        return Err(Error::EmptyDataset("historical"));
    }
    let dim = exp[0].len();
    let xs: Vec<&[f64]> = exp.iter().chain(hist).copied().collect();
    let labels: Vec<bool> = (0..xs.len()).map(|i| i < exp.len()).collect();
    let coef = fit_logistic(&xs, &labels, dim, "density ratio")?;
    Ok(DensityRatioModel::Logistic {
        coef,
        scale: hist.len() as f64 / exp.len() as f64,
        clip,
    })
}

/// Everything the static scores need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticNuisance {
    pub reward: RewardModel,
    pub hist_reward: HistoricalRewardModel,
    pub propensity: PropensityModel,
    pub density_ratio: DensityRatioModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeKind {
    #[default]
    Fitted,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PropensityKind {
    Known { p1: f64 },
    Fitted,
}

impl Default for PropensityKind {
    fn default() -> Self {
        PropensityKind::Known { p1: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DensityRatioKind {
    #[default]
    Constant1,
    Fitted,
}

/// How to build each static nuisance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticNuisanceSpec {
    pub reward: OutcomeKind,
    pub hist_reward: OutcomeKind,
    pub propensity: PropensityKind,
    pub density_ratio: DensityRatioKind,
    pub clip: f64,
}

impl Default for StaticNuisanceSpec {
    fn default() -> Self {
        Self {
            reward: OutcomeKind::Fitted,
            hist_reward: OutcomeKind::Fitted,
            propensity: PropensityKind::default(),
            density_ratio: DensityRatioKind::Constant1,
            clip: DEFAULT_CLIP,
        }
    }
}

impl StaticNuisanceSpec {
    pub fn fit(
        &self,
        exp: &[ExperimentalRecord],
        hist: &[HistoricalRecord],
    ) -> Result<StaticNuisance> {
        let reward = match self.reward {
            OutcomeKind::Fitted => fit_reward_model(exp)?,
            OutcomeKind::Zero => RewardModel::Zero,
        };
        let hist_reward = match self.hist_reward {
            OutcomeKind::Fitted => fit_historical_reward_model(hist)?,
            OutcomeKind::Zero => HistoricalRewardModel::Zero,
        };
        let propensity = match self.propensity {
            PropensityKind::Known { p1 } => known_propensity(p1, self.clip)?,
            PropensityKind::Fitted => fit_propensity(exp, self.clip)?,
        };
        let density_ratio = match self.density_ratio {
            DensityRatioKind::Constant1 => DensityRatioModel::Constant1,
            DensityRatioKind::Fitted => {
                let e: Vec<&[f64]> = exp.iter().map(|r| r.context.as_slice()).collect();
                let h: Vec<&[f64]> = hist.iter().map(|r| r.context.as_slice()).collect();
                fit_density_ratio_static(&e, &h, self.clip)?
            }
        };
        Ok(StaticNuisance {
            reward,
            hist_reward,
            propensity,
            density_ratio,
        })
    }
}
