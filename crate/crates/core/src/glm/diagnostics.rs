//! Regression diagnostics: variance inflation factors, the condition number
//! of the standardised design, and per-vertex Breusch-Pagan (Koenker) and
//! White heteroscedasticity tests.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{standardize_in_place, DesignMatrix, LinearModel, PhenotypeMatrix};
use crate::error::{Error, Result};

/// `1 - R^2` at or below this is reported as perfect collinearity.
const PERFECT_FIT: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnDiagnostic {
    pub name: String,
    pub vif: f64,
    pub collinear: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    /// One entry per non-intercept column.
    pub columns: Vec<ColumnDiagnostic>,
    pub condition_number: f64,
    pub breusch_pagan_p: Option<Vec<f64>>,
    pub white_p: Option<Vec<f64>>,
}

pub fn diagnostics(design: &DesignMatrix, y: Option<&PhenotypeMatrix>) -> Result<DiagnosticsReport> {
    let x = design.values();
    let vif = variance_inflation(x, design.intercept())?;
    let columns = (0..x.ncols())
        .filter(|&j| Some(j) != design.intercept())
        .zip(vif)
        .map(|(j, v)| ColumnDiagnostic {
            name: design.column_names()[j].clone(),
            vif: v,
            collinear: v.is_infinite(),
        })
        .collect();
    let condition_number = condition_number(x, design.intercept())?;
    let (breusch_pagan_p, white_p) = match y {
        None => (None, None),
        Some(y) => {
            if y.subjects() != design.subjects() {
                return Err(Error::DimensionMismatch(format!(
                    "design has {} subjects, phenotype has {}",
                    design.subjects(),
                    y.subjects()
                )));
            }
            let model = LinearModel::new(x)?;
            let bp_aux = AuxiliaryModel::new(breusch_pagan_regressors(x, design.intercept()))?;
            let white_aux = AuxiliaryModel::new(white_regressors(x, design.intercept()))?;
            let mut bp = Vec::with_capacity(y.vertices());
            let mut white = Vec::with_capacity(y.vertices());
            for v in 0..y.vertices() {
                let fit = model.fit(&y.values().column(v).into_owned())?;
                let u = fit.residuals.map(|e| e * e);
                bp.push(bp_aux.lm_p_value(&u)?);
                white.push(white_aux.lm_p_value(&u)?);
            }
            (Some(bp), Some(white))
        }
    };
    Ok(DiagnosticsReport {
        columns,
        condition_number,
        breusch_pagan_p,
        white_p,
    })
}

/// VIF of every non-intercept column, from regressing it on an intercept and
/// the remaining non-intercept columns. Perfect collinearity gives infinity.
pub fn variance_inflation(x: &DMatrix<f64>, intercept: Option<usize>) -> Result<Vec<f64>> {
    let n = x.nrows();
    let cols: Vec<usize> = (0..x.ncols()).filter(|&j| Some(j) != intercept).collect();
    cols.iter()
        .map(|&j| {
            let others: Vec<usize> = cols.iter().copied().filter(|&k| k != j).collect();
            let mut aux = DMatrix::from_element(n, others.len() + 1, 1.0);
            for (k, &c) in others.iter().enumerate() {
                aux.set_column(k + 1, &x.column(c));
            }
            let target = x.column(j).into_owned();
            let r2_complement = unexplained_fraction(&aux, &target)?;
            Ok(if r2_complement <= PERFECT_FIT {
                f64::INFINITY
            } else {
                1.0 / r2_complement
            })
        })
        .collect()
}

/// `RSS / TSS` of a least-squares fit, rank-deficient designs allowed.
fn unexplained_fraction(aux: &DMatrix<f64>, target: &DVector<f64>) -> Result<f64> {
    let mean = target.mean();
    let tss: f64 = target.iter().map(|v| (v - mean) * (v - mean)).sum();
    if tss == 0.0 {
        return Err(Error::ZeroVariance("auxiliary regression target".into()));
    }
    let svd = aux.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * aux.nrows().max(aux.ncols()) as f64 * f64::EPSILON;
    let coef = svd
        .solve(target, eps)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let rss = (target - aux * coef).norm_squared();
    Ok(rss / tss)
}

/// Ratio of extreme singular values of the design with its non-intercept
/// columns standardised.
pub fn condition_number(x: &DMatrix<f64>, intercept: Option<usize>) -> Result<f64> {
    let mut z = x.clone();
    for j in (0..z.ncols()).filter(|&j| Some(j) != intercept) {
        let mut col = z.column_mut(j);
        standardize_in_place(col.as_mut_slice()).ok_or_else(|| Error::ZeroVariance(format!("column {j}")))?;
    }
    let sv = z.svd(false, false).singular_values;
    let smin = sv.min();
    Ok(if smin == 0.0 { f64::INFINITY } else { sv.max() / smin })
}

fn non_intercept_columns(x: &DMatrix<f64>, intercept: Option<usize>) -> Vec<DVector<f64>> {
    (0..x.ncols())
        .filter(|&j| Some(j) != intercept)
        .map(|j| x.column(j).into_owned())
        .collect()
}

fn breusch_pagan_regressors(x: &DMatrix<f64>, intercept: Option<usize>) -> Vec<DVector<f64>> {
    non_intercept_columns(x, intercept)
}

/// Levels, then squares, then cross products.
fn white_regressors(x: &DMatrix<f64>, intercept: Option<usize>) -> Vec<DVector<f64>> {
    let levels = non_intercept_columns(x, intercept);
    let mut out = levels.clone();
    for c in &levels {
        out.push(c.component_mul(c));
    }
    for a in 0..levels.len() {
        for b in a + 1..levels.len() {
            out.push(levels[a].component_mul(&levels[b]));
        }
    }
    out
}

/// Auxiliary regression of squared residuals for an LM heteroscedasticity
/// test. Candidate regressors that are linearly dependent on earlier ones
/// are dropped, and the column count is capped at `n - 2`.
struct AuxiliaryModel {
    model: LinearModel,
    df: f64,
}

impl AuxiliaryModel {
    fn new(candidates: Vec<DVector<f64>>) -> Result<Self> {
        let n = candidates.first().map_or(0, |c| c.len());
        let ones = DVector::from_element(n, 1.0);
        let mut basis: Vec<DVector<f64>> = vec![ones.normalize()];
        let mut kept = vec![ones];
        for c in candidates {
            if kept.len() + 2 > n {
                break;
            }
            let mut r = c.clone();
            for q in &basis {
                let d = q.dot(&r);
                r -= q * d;
            }
            if r.norm() > 1e-8 * c.norm().max(f64::MIN_POSITIVE) {
                basis.push(r.normalize());
                kept.push(c);
            }
        }
        let df = (kept.len() - 1) as f64;
        let x = DMatrix::from_columns(&kept);
        Ok(AuxiliaryModel {
            model: LinearModel::new(&x)?,
            df,
        })
    }

    /// `n R^2` referred to a chi-square with one degree of freedom per
    /// non-constant regressor.
    fn lm_p_value(&self, u: &DVector<f64>) -> Result<f64> {
        let n = u.len() as f64;
        let mean = u.mean();
        let tss: f64 = u.iter().map(|v| (v - mean) * (v - mean)).sum();
        if tss == 0.0 || self.df == 0.0 {
            return Ok(1.0);
        }
        let rss = self.model.fit(u)?.residuals.norm_squared();
        let lm = n * (1.0 - rss / tss).max(0.0);
        let chi = ChiSquared::new(self.df).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(chi.sf(lm))
    }
}
