use serde::{Deserialize, Serialize};

use crate::data::StaticDataset;
use crate::error::{Error, Result};
use crate::nuisance::StaticNuisance;

use super::psi::psi_values;

/// Per-observation scores: ψ_e and ψ_h1 on D_e, ψ_h2 on D_h.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PsiValues {
    pub e: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Σ (x - x̄)(y - ȳ) / n², the sampling variance (or covariance) of a mean.
pub(crate) fn mean_cov(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let n = xs.len() as f64;
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (n * n)
}

impl PsiValues {
    pub fn tau_e(&self) -> f64 {
        mean(&self.e)
    }

    pub fn tau_h(&self) -> f64 {
        mean(&self.h1) - mean(&self.h2)
    }

    pub fn moments(&self) -> Result<MomentEstimates> {
        let (n_e, n_h) = (self.e.len(), self.h2.len());
        if n_e < 2 || n_h < 2 {
            return Err(Error::InsufficientSample {
                needed: 2,
                found: n_e.min(n_h),
            });
        }
        let tau_e = self.tau_e();
        let tau_h = self.tau_h();
        Ok(MomentEstimates {
            var_e: mean_cov(&self.e, &self.e),
            var_h: mean_cov(&self.h1, &self.h1) + mean_cov(&self.h2, &self.h2),
            cov_eh: mean_cov(&self.e, &self.h1),
            b_hat: tau_e - tau_h,
            tau_e,
            tau_h,
            n_e,
            n_h,
        })
    }
}

/// Base estimates and their estimated sampling (co)variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    pub var_e: f64,
    pub var_h: f64,
    pub cov_eh: f64,
    /// τ̂_e - τ̂_h.
    pub b_hat: f64,
    pub tau_e: f64,
    pub tau_h: f64,
    pub n_e: usize,
    pub n_h: usize,
}

impl MomentEstimates {
    pub fn n_min(&self) -> usize {
        self.n_e.min(self.n_h)
    }

    /// V̂ar(b̂) = V̂_e + V̂_h - 2Ĉov, floored at zero.
    pub fn var_b(&self) -> f64 {
        (self.var_e + self.var_h - 2.0 * self.cov_eh).max(0.0)
    }

    pub fn sd_b(&self) -> f64 {
        self.var_b().sqrt()
    }

    /// w²V̂_e + (1-w)²V̂_h + 2w(1-w)Ĉov.
    pub fn variance_at(&self, w: f64) -> f64 {
        w * w * self.var_e + (1.0 - w) * (1.0 - w) * self.var_h + 2.0 * w * (1.0 - w) * self.cov_eh
    }

    /// Estimated MSE of the combination at weight w.
    pub fn mse_at(&self, w: f64) -> f64 {
        self.variance_at(w) + (1.0 - w) * (1.0 - w) * self.b_hat * self.b_hat
    }

    pub fn tau_at(&self, w: f64) -> f64 {
        w * self.tau_e + (1.0 - w) * self.tau_h
    }
}

pub fn moment_estimates(data: &StaticDataset, nu: &StaticNuisance) -> Result<MomentEstimates> {
    psi_values(data, nu).moments()
}
