use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::normal_quantile;

use super::moments::MomentEstimates;

/// Denominators at or below this are treated as zero, and the weight falls back to 1.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// MSE-minimizing weight for a given squared-bias term, clamped to [0, 1].
pub fn weight_for_bias_sq(m: &MomentEstimates, bias_sq: f64) -> f64 {
    let num = bias_sq + m.var_h - m.cov_eh;
    let den = m.var_e + bias_sq + m.var_h - 2.0 * m.cov_eh;
    if den <= DEGENERATE_DENOMINATOR || !den.is_finite() {
        return 1.0;
    }
    (num / den).clamp(0.0, 1.0)
}

/// Plug-in minimizer of the estimated MSE.
pub fn weight_nonpessimistic(m: &MomentEstimates) -> f64 {
    weight_for_bias_sq(m, m.b_hat * m.b_hat)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "alpha",
            format!("must lie in (0, 1), got {alpha}"),
        ))
    }
}

/// One-sided normal bound U with P(|b̂ - b| ≤ U) ≈ 1 - alpha.
pub fn uncertainty_quantifier(m: &MomentEstimates, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(normal_quantile(1.0 - alpha) * m.sd_b())
}

/// Weight computed with b̂² replaced by (|b̂| + U)².
pub fn weight_pessimistic(m: &MomentEstimates, u: f64) -> f64 {
    let b = m.b_hat.abs() + u;
    weight_for_bias_sq(m, b * b)
}

/// Wald interval τ̂ ± z_{1-alpha/2} sqrt(var).
pub fn confidence_interval(tau: f64, var: f64, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let half = normal_quantile(1.0 - alpha / 2.0) * var.max(0.0).sqrt();
    Ok((tau - half, tau + half))
}

/// Reward-shift magnitude relative to the noise in b̂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Small,
    Moderate,
    Large,
    NotApplicable,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Small => "small",
            Regime::Moderate => "moderate",
            Regime::Large => "large",
            Regime::NotApplicable => "n/a",
        })
    }
}

pub const HYBRID_C1: f64 = 1.0;

/// sqrt(log n_min).
pub fn hybrid_c2(n_min: usize) -> f64 {
    (n_min as f64).ln().sqrt()
}

/// small: |b| ≤ c1 sd; moderate: up to c2 sd; large beyond. Needs n_min ≥ 3.
pub fn classify_regime(b_abs: f64, sd: f64, n_min: usize) -> Regime {
    if n_min < 3 {
        return Regime::NotApplicable;
    }
    if b_abs <= HYBRID_C1 * sd {
        Regime::Small
    } else if b_abs <= hybrid_c2(n_min) * sd {
        Regime::Moderate
    } else {
        Regime::Large
    }
}

pub fn estimated_regime(m: &MomentEstimates) -> Regime {
    classify_regime(m.b_hat.abs(), m.sd_b(), m.n_min())
}

/// Method picked by the hybrid rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HybridChoice {
    Spe,
    Pessi,
    Edo,
    /// Sequential stand-in where the rule would pick SPE.
    NonPessi,
}

impl fmt::Display for HybridChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HybridChoice::Spe => "spe",
            HybridChoice::Pessi => "pessi",
            HybridChoice::Edo => "edo",
            HybridChoice::NonPessi => "nonpessi",
        })
    }
}

pub fn hybrid_select(m: &MomentEstimates) -> Result<HybridChoice> {
    match estimated_regime(m) {
        Regime::Small => Ok(HybridChoice::Spe),
        Regime::Moderate => Ok(HybridChoice::Pessi),
        Regime::Large => Ok(HybridChoice::Edo),
        Regime::NotApplicable => Err(Error::InsufficientSample {
            needed: 3,
            found: m.n_min(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn moments(var_e: f64, var_h: f64, cov: f64, b: f64) -> MomentEstimates {
        MomentEstimates {
            var_e,
            var_h,
            cov_eh: cov,
            b_hat: b,
            tau_e: b,
            tau_h: 0.0,
            n_e: 100,
            n_h: 100,
        }
    }

    #[test]
    fn nonpessimistic_cases() {
        assert_eq!(weight_nonpessimistic(&moments(1.0, 1.0, 0.0, 0.0)), 0.5);
        assert!((weight_nonpessimistic(&moments(1.0, 1.0, 0.0, 3f64.sqrt())) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn negative_denominator_falls_back_to_edo() {
        assert_eq!(weight_nonpessimistic(&moments(1.0, 1.0, 2.0, 0.0)), 1.0);
    }

    #[test]
    fn clamps_negative_raw_value() {
        // raw value -1 / 1
        let m = moments(4.0, 1.0, 2.0, 0.0);
        assert_eq!(weight_nonpessimistic(&m), 0.0);
    }

    #[test]
    fn degenerate_denominator_means_edo() {
        assert_eq!(weight_nonpessimistic(&moments(0.0, 0.0, 0.0, 0.0)), 1.0);
    }

    #[test]
    fn quantifier_values() {
        let m = moments(0.5, 0.5, 0.0, 0.0);
        assert!((uncertainty_quantifier(&m, 0.05).unwrap() - 1.6448536269514722).abs() < 1e-9);
        assert_eq!(
            uncertainty_quantifier(&moments(0.0, 0.0, 0.0, 1.0), 0.05).unwrap(),
            0.0
        );
        assert!(uncertainty_quantifier(&m, 1.0).is_err());
    }

    #[test]
    fn pessimistic_cases() {
        let m = moments(1.0, 1.0, 0.0, 0.0);
        assert!((weight_pessimistic(&m, 1.0) - 2.0 / 3.0).abs() < 1e-15);
        let m = moments(1.3, 0.4, 0.1, -0.7);
        assert_eq!(weight_pessimistic(&m, 0.0), weight_nonpessimistic(&m));
    }

    #[test]
    fn wald_interval() {
        let (lo, hi) = confidence_interval(1.0, 0.04, 0.05).unwrap();
        assert!((lo - 0.608).abs() < 1e-3 && (hi - 1.392).abs() < 1e-3);
        assert_eq!(confidence_interval(1.0, 0.0, 0.05).unwrap(), (1.0, 1.0));
        assert!(confidence_interval(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn hybrid_thresholds() {
        // sd(b̂) = 1
        let pick = |b: f64| hybrid_select(&moments(0.5, 0.5, 0.0, b)).unwrap();
        assert_eq!(pick(0.5), HybridChoice::Spe);
        assert_eq!(pick(1.5), HybridChoice::Pessi);
        assert_eq!(pick(3.0), HybridChoice::Edo);
        let mut tiny = moments(0.5, 0.5, 0.0, 0.0);
        tiny.n_h = 2;
        assert!(hybrid_select(&tiny).is_err());
    }
}
