//! Entropy-regularised smooth maximum.
//!
//! For a temperature `lambda > 0` the smooth max of a score vector `a` is
//! `lambda * S(a / lambda)` where `S` is a smooth max approximator. Its
//! gradient `nu` is a soft-argmax on the simplex and `eta = lambda * Hessian`
//! measures how undecided the soft-argmax still is.
//!
//! Only the Shannon approximator (`S = log-sum-exp`) is provided. Any other
//! approximator has to supply the same (value, gradient, scaled Hessian)
//! triple.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// The smooth max approximator used to regularise decisions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothMaxKind {
    /// `S(a) = ln sum exp(a_i)`; dual to the Shannon entropy.
    #[default]
    Shannon,
}

/// Value, gradient and scaled Hessian of the smooth max at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothMaxEval {
    pub value: f64,
    pub nu: Vec<f64>,
    pub eta: DMatrix<f64>,
    pub lambda: f64,
}

fn check(a: &[f64], lambda: f64) -> Result<()> {
    if a.is_empty() {
        return Err(invalid("smooth max of an empty vector"));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("temperature must be positive and finite, got {lambda}")));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(invalid("smooth max input contains non-finite entries"));
    }
    Ok(())
}

fn hard_max(a: &[f64]) -> f64 {
    a.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl SmoothMaxKind {
    /// `lambda * S(a / lambda)`.
    pub fn value(self, a: &[f64], lambda: f64) -> Result<f64> {
        check(a, lambda)?;
        match self {
            SmoothMaxKind::Shannon => {
                let top = hard_max(a);
                let sum: f64 = a.iter().map(|x| ((x - top) / lambda).exp()).sum();
                Ok(top + lambda * sum.ln())
            }
        }
    }

    /// Gradient of the smooth max; a point of the probability simplex.
    pub fn nu(self, a: &[f64], lambda: f64) -> Result<Vec<f64>> {
        check(a, lambda)?;
        match self {
            SmoothMaxKind::Shannon => {
                let top = hard_max(a);
                let mut w: Vec<f64> = a.iter().map(|x| ((x - top) / lambda).exp()).collect();
                let total: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= total);
                Ok(w)
            }
        }
    }

    /// `lambda` times the Hessian of the smooth max.
    pub fn eta(self, a: &[f64], lambda: f64) -> Result<DMatrix<f64>> {
        let nu = self.nu(a, lambda)?;
        Ok(self.eta_from_nu(&nu))
    }

    pub(crate) fn eta_from_nu(self, nu: &[f64]) -> DMatrix<f64> {
        match self {
            SmoothMaxKind::Shannon => {
                let k = nu.len();
                DMatrix::from_fn(k, k, |i, j| {
                    let diag = if i == j { nu[i] } else { 0.0 };
                    diag - nu[i] * nu[j]
                })
            }
        }
    }

    /// All three quantities at once.
    pub fn eval(self, a: &[f64], lambda: f64) -> Result<SmoothMaxEval> {
        let value = self.value(a, lambda)?;
        let nu = self.nu(a, lambda)?;
        let eta = self.eta_from_nu(&nu);
        Ok(SmoothMaxEval { value, nu, eta, lambda })
    }
}

/// Shannon smooth max, `lambda * ln sum exp(a_i / lambda)`.
pub fn smax(a: &[f64], lambda: f64) -> Result<f64> {
    SmoothMaxKind::Shannon.value(a, lambda)
}

/// Shannon soft-argmax, `softmax(a / lambda)`.
pub fn nu(a: &[f64], lambda: f64) -> Result<Vec<f64>> {
    SmoothMaxKind::Shannon.nu(a, lambda)
}

/// Shannon `eta_ij = nu_i (1{i=j} - nu_j)`.
pub fn eta(a: &[f64], lambda: f64) -> Result<DMatrix<f64>> {
    SmoothMaxKind::Shannon.eta(a, lambda)
}
