//! Small dense solvers shared by the nuisance fits and the simulation
//! harness: least squares, logistic regression by Newton's method, and a
//! Cholesky solve for symmetric positive-definite systems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Affine function `intercept + slopes . s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFn {
    pub intercept: f64,
    pub slopes: Vec<f64>,
}

impl LinearFn {
    pub fn zero(dim: usize) -> Self {
        Self {
            intercept: 0.0,
            slopes: vec![0.0; dim],
        }
    }

    pub fn constant(value: f64, dim: usize) -> Self {
        Self {
            intercept: value,
            slopes: vec![0.0; dim],
        }
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        debug_assert_eq!(s.len(), self.slopes.len());
        self.intercept + self.slopes.iter().zip(s).map(|(b, x)| b * x).sum::<f64>()
    }

    pub fn dim(&self) -> usize {
        self.slopes.len()
    }

    fn from_coefficients(beta: &DVector<f64>) -> Self {
        Self {
            intercept: beta[0],
            slopes: beta.iter().skip(1).copied().collect(),
        }
    }
}

/// Design matrix with a leading intercept column.
pub fn design_with_intercept<'a>(
    rows: impl ExactSizeIterator<Item = &'a [f64]>,
    dim: usize,
) -> DMatrix<f64> {
    let n = rows.len();
    let mut x = DMatrix::zeros(n, dim + 1);
    for (i, s) in rows.enumerate() {
        x[(i, 0)] = 1.0;
        for (j, v) in s.iter().enumerate() {
            x[(i, j + 1)] = *v;
        }
    }
    x
}

const RANK_TOL: f64 = 1e-10;

/// Ordinary least squares via SVD; fails when the design is rank deficient
/// (smallest singular value below `1e-10` times the largest).
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    if x.nrows() < x.ncols() {
        return Err(Error::RankDeficient(format!(
            "{what}: {} rows for {} coefficients",
            x.nrows(),
            x.ncols()
        )));
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        return Err(Error::RankDeficient(what.to_owned()));
    }
    svd.solve(y, 0.0)
        .map_err(|e| Error::Singular(format!("{what}: {e}")))
}

/// Least squares of `y` on `(1, s)`.
pub fn fit_affine(contexts: &[&[f64]], y: &[f64], dim: usize, what: &str) -> Result<LinearFn> {
    let x = design_with_intercept(contexts.iter().copied(), dim);
    let beta = least_squares(&x, &DVector::from_column_slice(y), what)?;
    Ok(LinearFn::from_coefficients(&beta))
}

/// Solve `a x = b` for symmetric positive-definite `a`.
pub fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Singular(what.to_owned()))?;
    Ok(chol.solve(b))
}

pub const LOGISTIC_MAX_ITER: usize = 100;
pub const LOGISTIC_GRAD_TOL: f64 = 1e-10;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression of binary labels on `(1, s)` by Newton's method.
///
/// Convergence is declared when the sup-norm of the mean log-likelihood
/// gradient drops below [`LOGISTIC_GRAD_TOL`]. A near-zero deviance at the
/// solution means the labels are separable and the MLE does not exist.
pub fn fit_logistic(
    contexts: &[&[f64]],
    labels: &[bool],
    dim: usize,
    what: &str,
) -> Result<LinearFn> {
    let n = contexts.len();
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::LogisticNonConvergence(format!(
            "{what}: only one class present"
        )));
    }
    let x = design_with_intercept(contexts.iter().copied(), dim);
    let y = DVector::from_iterator(n, labels.iter().map(|&l| if l { 1.0 } else { 0.0 }));
    let p = dim + 1;
    let mut beta = DVector::zeros(p);
    let nf = n as f64;

    for _ in 0..LOGISTIC_MAX_ITER {
        let eta = &x * &beta;
        let mu = eta.map(sigmoid);
        let grad = x.transpose() * (&y - &mu) / nf;
        let loglik: f64 = (0..n)
            .map(|i| {
                let e = eta[i];
                // log(1 + exp(e)) computed stably
                let softplus = if e > 0.0 {
                    e + (-e).exp().ln_1p()
                } else {
                    e.exp().ln_1p()
                };
                y[i] * e - softplus
            })
            .sum::<f64>()
            / nf;
        if grad.amax() < LOGISTIC_GRAD_TOL {
            if loglik > -1e-6 {
                return Err(Error::LogisticNonConvergence(format!(
                    "{what}: classes are separable"
                )));
            }
            return Ok(LinearFn::from_coefficients(&beta));
        }
        let w = mu.map(|m| m * (1.0 - m));
        let mut h = DMatrix::zeros(p, p);
        for i in 0..n {
            let row = x.row(i);
            h += w[i] * row.transpose() * row;
        }
        h /= nf;
        let step = match h.cholesky() {
            Some(c) => c.solve(&grad),
            None => {
                return Err(Error::LogisticNonConvergence(format!(
                    "{what}: singular Hessian (separable classes)"
                )))
            }
        };
        beta += step;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::LogisticNonConvergence(format!(
                "{what}: diverging coefficients"
            )));
        }
    }
    Err(Error::LogisticNonConvergence(format!(
        "{what}: no convergence after {LOGISTIC_MAX_ITER} Newton iterations"
    )))
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_noiseless_line() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.3 - 1.0]).collect();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let y: Vec<f64> = xs.iter().map(|s| 1.0 + 2.0 * s[0]).collect();
        let f = fit_affine(&refs, &y, 1, "test").unwrap();
        assert!((f.intercept - 1.0).abs() < 1e-10);
        assert!((f.slopes[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn ols_detects_constant_regressor() {
        let xs = [[0.5_f64]; 6];
        let refs: Vec<&[f64]> = xs.iter().map(|s| s.as_slice()).collect();
        let err = fit_affine(&refs, &[1.0; 6], 1, "arm 1").unwrap_err();
        assert!(matches!(err, Error::RankDeficient(ref s) if s == "arm 1"));
    }

    #[test]
    fn logistic_balanced_labels_near_zero() {
        let xs: Vec<[f64; 1]> = (0..200)
            .map(|i| [((i * 37) % 200) as f64 / 100.0 - 1.0])
            .collect();
        let refs: Vec<&[f64]> = xs.iter().map(|s| s.as_slice()).collect();
        let labels: Vec<bool> = (0..200).map(|i| i % 2 == 0).collect();
        let f = fit_logistic(&refs, &labels, 1, "t").unwrap();
        assert!(f.intercept.abs() < 0.05);
    }

    #[test]
    fn logistic_separation_is_an_error() {
        let xs: Vec<[f64; 1]> = (0..40).map(|i| [i as f64]).collect();
        let refs: Vec<&[f64]> = xs.iter().map(|s| s.as_slice()).collect();
        let labels: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        assert!(matches!(
            fit_logistic(&refs, &labels, 1, "t"),
            Err(Error::LogisticNonConvergence(_))
        ));
    }

    #[test]
    fn quantiles() {
        assert!((normal_quantile(0.95) - 1.6448536269514722).abs() < 1e-9);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
    }
}
