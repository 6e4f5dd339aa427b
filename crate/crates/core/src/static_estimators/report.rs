use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::weights::{HybridChoice, Regime};

/// Estimation method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    /// Experimental data only (weight 1).
    Edo,
    NonPessi,
    Pessi,
    Hybrid,
    Spe,
    Lasso {
        lambda: f64,
    },
    /// Caller-chosen constant weight.
    Fixed {
        weight: f64,
    },
}

impl Method {
    pub fn is_lasso(&self) -> bool {
        matches!(self, Method::Lasso { .. })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Edo => f.write_str("edo"),
            Method::NonPessi => f.write_str("nonpessi"),
            Method::Pessi => f.write_str("pessi"),
            Method::Hybrid => f.write_str("hybrid"),
            Method::Spe => f.write_str("spe"),
            Method::Lasso { lambda } => write!(f, "lasso-{lambda}"),
            Method::Fixed { weight } => write!(f, "fixed-{weight}"),
        }
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts the `Display` names; `lasso-<lambda>` and `fixed-<w>` carry
    /// their parameter.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let param = |prefix: &str| {
            lower
                .strip_prefix(prefix)
                .and_then(|l| l.parse::<f64>().ok())
                .filter(|l| l.is_finite() && *l >= 0.0)
        };
        Ok(match lower.as_str() {
            "edo" => Method::Edo,
            "nonpessi" => Method::NonPessi,
            "pessi" => Method::Pessi,
            "hybrid" => Method::Hybrid,
            "spe" => Method::Spe,
            _ => {
                if let Some(lambda) = param("lasso-") {
                    Method::Lasso { lambda }
                } else if let Some(weight) = param("fixed-").filter(|w| *w <= 1.0) {
                    Method::Fixed { weight }
                } else {
                    return Err(Error::invalid("method", format!("unknown method {s:?}")));
                }
            }
        })
    }
}

/// Outcome of one estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub tau_hat: f64,
    pub var_hat: f64,
    pub weight: f64,
    pub bias_hat: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub regime: Regime,
    pub n_e: usize,
    pub n_h: usize,
    /// Sequential only: episodes whose score hit the magnitude cap.
    pub cap_breaches: usize,
    /// Set when `method` is hybrid.
    pub choice: Option<HybridChoice>,
}

impl EstimateReport {
    pub const CSV_HEADER: &'static str =
        "method,tau_hat,var_hat,weight,bias_hat,ci_lower,ci_upper,regime";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            self.method,
            self.tau_hat,
            self.var_hat,
            self.weight,
            self.bias_hat,
            self.ci_lower,
            self.ci_upper,
            self.regime
        )
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_lower <= truth && truth <= self.ci_upper
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Edo,
            Method::NonPessi,
            Method::Pessi,
            Method::Hybrid,
            Method::Spe,
            Method::Lasso { lambda: 0.8 },
            Method::Fixed { weight: 0.25 },
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("lasso-x".parse::<Method>().is_err());
        assert!("ridge".parse::<Method>().is_err());
    }
}
