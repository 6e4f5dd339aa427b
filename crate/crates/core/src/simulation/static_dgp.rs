use rand::{Rng, RngExt};
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Arm, ContextVector, ExperimentalRecord, HistoricalRecord, StaticDataset};
use crate::error::{Error, Result};

/// Treatment assignment in a static experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// Alternating 1, 0, 1, 0, ... over the records.
    Switchback,
    /// Independent fair coin per record.
    Random,
}

impl std::fmt::Display for Design {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Design::Switchback => "switchback",
            Design::Random => "random",
        })
    }
}

fn assign(design: Design, i: usize, rng: &mut (impl Rng + ?Sized)) -> Arm {
    match design {
        Design::Switchback if i.is_multiple_of(2) => Arm::Treatment,
        Design::Switchback => Arm::Control,
        Design::Random if rng.random_bool(0.5) => Arm::Treatment,
        Design::Random => Arm::Control,
    }
}

/// Linear single-covariate model:
/// R_e = 10 + b_h + A + S + (2 + d) ε and R_h = 10 + S + ε, S, ε ~ N(0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticDgpConfig {
    pub n_e: usize,
    /// Historical size is `m * n_e`.
    pub m: usize,
    pub b_h: f64,
    pub d: f64,
    pub design: Design,
}

impl Default for StaticDgpConfig {
    fn default() -> Self {
        Self {
            n_e: 48,
            m: 2,
            b_h: 0.0,
            d: 0.0,
            design: Design::Switchback,
        }
    }
}

pub const EXAMPLE1_ATE: f64 = 1.0;

fn check_sizes(n_e: usize, m: usize, d: f64) -> Result<()> {
    if n_e < 4 {
        return Err(Error::invalid(
            "n_e",
            format!("must be at least 4, got {n_e}"),
        ));
    }
    if m < 1 {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    if !(d.is_finite() && d > -1.0) {
        return Err(Error::invalid(
            "d",
            format!("must be a finite number above -1, got {d}"),
        ));
    }
    Ok(())
}

impl StaticDgpConfig {
    pub fn validate(&self) -> Result<()> {
        check_sizes(self.n_e, self.m, self.d)
    }
}

pub fn gen_static_example1(
    cfg: &StaticDgpConfig,
    rng: &mut (impl Rng + ?Sized),
) -> Result<StaticDataset> {
    cfg.validate()?;
    let mut exp = Vec::with_capacity(cfg.n_e);
    for i in 0..cfg.n_e {
        let s: f64 = StandardNormal.sample(rng);
        let eps: f64 = StandardNormal.sample(rng);
        let a = assign(cfg.design, i, rng);
        let r = 10.0 + cfg.b_h + a.bit() as f64 + s + (2.0 + cfg.d) * eps;
        exp.push(ExperimentalRecord::new(s.into(), a, r)?);
    }
    let mut hist = Vec::with_capacity(cfg.m * cfg.n_e);
    for _ in 0..cfg.m * cfg.n_e {
        let s: f64 = StandardNormal.sample(rng);
        let eps: f64 = StandardNormal.sample(rng);
        hist.push(HistoricalRecord::new(s.into(), 10.0 + s + eps)?);
    }
    StaticDataset::new(exp, hist)
}

/// Nonlinear three-covariate model with an effect that interacts with S1:
/// R = f(S) + γ A S1 + ε, f = (1 + β1 S1)² + β2 S2 + β3 S3 + β4 S1 S2 + β5 S1 S3.
/// Experimental rewards carry the shift b_h and noise factor (1 + d).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClinicalConfig {
    pub n_e: usize,
    pub m: usize,
    pub b_h: f64,
    pub d: f64,
    pub gamma: f64,
}

impl Default for ClinicalConfig {
    fn default() -> Self {
        Self {
            n_e: 200,
            m: 2,
            b_h: 0.0,
            d: 0.0,
            gamma: CLINICAL_GAMMA,
        }
    }
}

pub const CLINICAL_BETA: [f64; 5] = [0.5, -0.3, 0.2, 0.4, -0.25];
pub const CLINICAL_GAMMA: f64 = 0.3;
pub const CLINICAL_S1_MEAN: f64 = 0.5;
pub const CLINICAL_S2_P: f64 = 0.6;
pub const CLINICAL_S3_P: f64 = 0.3;

impl ClinicalConfig {
    pub fn true_ate(&self) -> f64 {
        self.gamma * CLINICAL_S1_MEAN
    }
}

pub fn clinical_baseline(s: &[f64]) -> f64 {
    let [b1, b2, b3, b4, b5] = CLINICAL_BETA;
    let (s1, s2, s3) = (s[0], s[1], s[2]);
    (1.0 + b1 * s1).powi(2) + b2 * s2 + b3 * s3 + b4 * s1 * s2 + b5 * s1 * s3
}

fn clinical_context(rng: &mut (impl Rng + ?Sized)) -> Result<ContextVector> {
    let s1 = Normal::new(CLINICAL_S1_MEAN, 1.0).unwrap().sample(rng);
    let s2 = if rng.random_bool(CLINICAL_S2_P) {
        1.0
    } else {
        0.0
    };
    let s3 = if rng.random_bool(CLINICAL_S3_P) {
        1.0
    } else {
        0.0
    };
    ContextVector::new(vec![s1, s2, s3])
}

pub fn gen_clinical(cfg: &ClinicalConfig, rng: &mut (impl Rng + ?Sized)) -> Result<StaticDataset> {
    check_sizes(cfg.n_e, cfg.m, cfg.d)?;
    let mut exp = Vec::with_capacity(cfg.n_e);
    for _ in 0..cfg.n_e {
        let s = clinical_context(rng)?;
        let a = assign(Design::Random, 0, rng);
        let eps: f64 = StandardNormal.sample(rng);
        let sv = s.as_slice();
        let r = clinical_baseline(sv)
            + cfg.gamma * a.bit() as f64 * sv[0]
            + cfg.b_h
            + (1.0 + cfg.d) * eps;
        exp.push(ExperimentalRecord::new(s, a, r)?);
    }
    let mut hist = Vec::with_capacity(cfg.m * cfg.n_e);
    for _ in 0..cfg.m * cfg.n_e {
        let s = clinical_context(rng)?;
        let eps: f64 = StandardNormal.sample(rng);
        let r = clinical_baseline(s.as_slice()) + eps;
        hist.push(HistoricalRecord::new(s, r)?);
    }
    StaticDataset::new(exp, hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::replication_rng;

    #[test]
    fn switchback_treats_half_rounded_up() {
        let cfg = StaticDgpConfig {
            n_e: 49,
            ..Default::default()
        };
        let data = gen_static_example1(&cfg, &mut replication_rng(3, 0, 0)).unwrap();
        let treated = data
            .experimental()
            .iter()
            .filter(|r| r.action == Arm::Treatment)
            .count();
        assert_eq!(treated, 25);
        assert_eq!(data.historical().len(), 98);
    }

    #[test]
    fn same_stream_same_data() {
        let cfg = StaticDgpConfig::default();
        let a = gen_static_example1(&cfg, &mut replication_rng(9, 1, 2)).unwrap();
        let b = gen_static_example1(&cfg, &mut replication_rng(9, 1, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_interaction_means_zero_effect() {
        let cfg = ClinicalConfig {
            gamma: 0.0,
            ..Default::default()
        };
        assert_eq!(cfg.true_ate(), 0.0);
        assert!((ClinicalConfig::default().true_ate() - 0.15).abs() < 1e-15);
    }
}
