//! Oracle weight and spurious estimation error from brute-force replication.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::static_estimators::DEGENERATE_DENOMINATOR;

/// Per-replication errors of the two base estimators, X = τ̂_e − τ and
/// Y = τ̂_h − τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseErrors {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub w_star: f64,
    /// Monte Carlo MSE of w* τ̂_e + (1 − w*) τ̂_h.
    pub oracle_mse: f64,
    pub e_xx: f64,
    pub e_yy: f64,
    pub e_xy: f64,
}

impl Oracle {
    /// Monte Carlo MSE at a fixed weight from the same second moments.
    pub fn mse_at(&self, w: f64) -> f64 {
        w * w * self.e_xx + (1.0 - w).powi(2) * self.e_yy + 2.0 * w * (1.0 - w) * self.e_xy
    }

    pub fn squared_error(&self, e: BaseErrors) -> f64 {
        (self.w_star * e.x + (1.0 - self.w_star) * e.y).powi(2)
    }
}

/// Minimize the replication MSE of the combination over w ∈ [0, 1]. The
/// second moments fold the variances, the covariance and the true bias of
/// τ̂_h into one quadratic.
pub fn oracle_from_errors(errors: &[BaseErrors]) -> Result<Oracle> {
    if errors.is_empty() {
        return Err(Error::invalid("replications", "must be at least 1"));
    }
    let n = errors.len() as f64;
    let e_xx = errors.iter().map(|e| e.x * e.x).sum::<f64>() / n;
    let e_yy = errors.iter().map(|e| e.y * e.y).sum::<f64>() / n;
    let e_xy = errors.iter().map(|e| e.x * e.y).sum::<f64>() / n;
    let den = e_xx + e_yy - 2.0 * e_xy;
    let w_star = if den <= DEGENERATE_DENOMINATOR || !den.is_finite() {
        1.0
    } else {
        ((e_yy - e_xy) / den).clamp(0.0, 1.0)
    };
    let mut o = Oracle {
        w_star,
        oracle_mse: 0.0,
        e_xx,
        e_yy,
        e_xy,
    };
    o.oracle_mse = o.mse_at(w_star).max(0.0);
    Ok(o)
}

/// [(1 − w*)² − (1 − ŵ)²] (b̂ − b)² for one replication.
pub fn see_term(w_star: f64, w_hat: f64, b_hat: f64, b_true: f64) -> f64 {
    ((1.0 - w_star).powi(2) - (1.0 - w_hat).powi(2)) * (b_hat - b_true).powi(2)
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}
