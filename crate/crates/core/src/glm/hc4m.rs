//! HC4m heteroscedasticity-consistent standard errors (Cribari-Neto and da
//! Silva, 2011).
//!
//! Observation `i` enters the sandwich `A diag(w) A'`, `A = (X'X)^-1 X'`,
//! with weight `e_i^2 / (1 - h_ii)^d_i` where
//! `d_i = min(g1, n h_ii / p) + min(g2, n h_ii / p)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::LinearModel;
use crate::error::{Error, Result};

/// Leverages at or above this are treated as exact leverage points.
const MAX_LEVERAGE: f64 = 1.0 - 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hc4mConstants {
    pub gamma1: f64,
    pub gamma2: f64,
}

impl Default for Hc4mConstants {
    fn default() -> Self {
        Hc4mConstants {
            gamma1: 1.0,
            gamma2: 1.5,
        }
    }
}

/// The denominators `(1 - h_ii)^d_i`.
pub(crate) fn discounts(leverage: &[f64], p: usize, c: Hc4mConstants) -> Result<Vec<f64>> {
    let n = leverage.len() as f64;
    leverage
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            if h.is_nan() || h >= MAX_LEVERAGE {
                return Err(Error::ExactLeverage(i));
            }
            let ratio = n * h / p as f64;
            let delta = c.gamma1.min(ratio) + c.gamma2.min(ratio);
            Ok((1.0 - h).powf(delta))
        })
        .collect()
}

/// HC4m standard errors for every coefficient of `x`, given residuals and
/// leverages from a fit of the same design.
pub fn hc4m_se(
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    leverages: &DVector<f64>,
    constants: Hc4mConstants,
) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if residuals.len() != n || leverages.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} rows but {} residuals and {} leverages",
            residuals.len(),
            leverages.len()
        )));
    }
    let discount = discounts(leverages.as_slice(), p, constants)?;
    let model = LinearModel::new(x)?;
    let a = model.pseudo_inverse();
    Ok(DVector::from_fn(p, |j, _| {
        (0..n)
            .map(|i| a[(j, i)] * a[(j, i)] * residuals[i] * residuals[i] / discount[i])
            .sum::<f64>()
            .sqrt()
    }))
}
