//! Vertex-wise general linear models.
//!
//! The design is factored once ([`LinearModel`]) and the same factorisation
//! is applied to every vertex column of the phenotype matrix. Both the
//! observed fit and every permutation pass go through [`ContrastKernel`], so
//! the two paths agree to the last bit.

pub mod diagnostics;
mod hc4m;
mod ols;

pub use hc4m::{hc4m_se, Hc4mConstants};
pub use ols::{leverages, ols_fit, ContrastKernel, LinearModel, OlsFit, VertexFit};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual sums of squares below this fraction of `y'y` are treated as an
/// exact fit: the standard error is reported as zero and the vertex flagged.
pub const DEGENERATE_RSS: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    column_names: Vec<String>,
    interest: Vec<usize>,
    nuisance: Vec<usize>,
    intercept: Option<usize>,
}

impl DesignMatrix {
    /// `intercept`, when given, must be a nuisance column of ones; it is the
    /// only column allowed to be constant.
    pub fn new(
        values: DMatrix<f64>,
        column_names: Vec<String>,
        interest: Vec<usize>,
        nuisance: Vec<usize>,
        intercept: Option<usize>,
    ) -> Result<Self> {
        let p = values.ncols();
        if column_names.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "{} column names for {p} columns",
                column_names.len()
            )));
        }
        let mut seen = vec![0u8; p];
        for &j in interest.iter().chain(&nuisance) {
            if j >= p {
                return Err(Error::Validation(format!("column index {j} out of range")));
            }
            seen[j] += 1;
        }
        if let Some(j) = seen.iter().position(|&s| s != 1) {
            return Err(Error::Validation(format!(
                "column '{}' must be exactly one of interest or nuisance",
                column_names[j]
            )));
        }
        if interest.is_empty() {
            return Err(Error::Validation("no interest column".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("design contains non-finite values".into()));
        }
        if let Some(c) = intercept {
            if !nuisance.contains(&c) {
                return Err(Error::Validation("intercept must be a nuisance column".into()));
            }
            if values.column(c).iter().any(|&v| v != 1.0) {
                return Err(Error::Validation(format!(
                    "intercept column '{}' is not all ones",
                    column_names[c]
                )));
            }
        }
        for j in (0..p).filter(|&j| Some(j) != intercept) {
            let col = values.column(j);
            if col.iter().all(|&v| v == col[0]) {
                return Err(Error::ZeroVariance(column_names[j].clone()));
            }
        }
        Ok(DesignMatrix {
            values,
            column_names,
            interest,
            nuisance,
            intercept,
        })
    }

    /// Build from named columns, appending an intercept column named
    /// `intercept` to the nuisance set.
    pub fn with_intercept(columns: &[(&str, &[f64])], interest: &[&str], nuisance: &[&str]) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.1.len());
        if columns.iter().any(|c| c.1.len() != n) {
            return Err(Error::DimensionMismatch("design columns differ in length".into()));
        }
        let find = |name: &str| {
            columns
                .iter()
                .position(|c| c.0 == name)
                .ok_or_else(|| Error::Validation(format!("unknown design column '{name}'")))
        };
        let mut order = Vec::new();
        for name in interest.iter().chain(nuisance) {
            order.push(find(name)?);
        }
        let p = order.len() + 1;
        let mut values = DMatrix::from_element(n, p, 1.0);
        let mut names = Vec::with_capacity(p);
        for (k, &src) in order.iter().enumerate() {
            values.column_mut(k).copy_from_slice(columns[src].1);
            names.push(columns[src].0.to_string());
        }
        names.push("intercept".to_string());
        let interest_idx = (0..interest.len()).collect();
        let nuisance_idx = (interest.len()..p).collect();
        DesignMatrix::new(values, names, interest_idx, nuisance_idx, Some(p - 1))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn interest_columns(&self) -> &[usize] {
        &self.interest
    }

    pub fn nuisance_columns(&self) -> &[usize] {
        &self.nuisance
    }

    pub fn intercept(&self) -> Option<usize> {
        self.intercept
    }

    pub fn subjects(&self) -> usize {
        self.values.nrows()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Nuisance columns, in declaration order.
    pub fn nuisance_matrix(&self) -> DMatrix<f64> {
        self.values.select_columns(&self.nuisance)
    }

    /// Copy with every non-intercept column standardised to mean 0 and unit
    /// sample standard deviation.
    pub fn standardized(&self) -> Result<Self> {
        let mut values = self.values.clone();
        for j in (0..values.ncols()).filter(|&j| Some(j) != self.intercept) {
            let mut col = values.column_mut(j);
            standardize_in_place(col.as_mut_slice())
                .ok_or_else(|| Error::ZeroVariance(self.column_names[j].clone()))?;
        }
        Ok(DesignMatrix { values, ..self.clone() })
    }

    /// Keep only the listed rows (subjects), in the given order.
    pub fn select_subjects(&self, rows: &[usize]) -> Result<Self> {
        DesignMatrix::new(
            self.values.select_rows(rows),
            self.column_names.clone(),
            self.interest.clone(),
            self.nuisance.clone(),
            self.intercept,
        )
    }

    /// Model with only one of the interest columns plus all nuisance columns.
    /// Returns the reduced design and the contrast index within it.
    pub fn single_interest(&self, column: usize) -> Result<(Self, usize)> {
        if !self.interest.contains(&column) {
            return Err(Error::Validation(format!(
                "column '{}' is not an interest column",
                self.column_names.get(column).map_or("?", |s| s)
            )));
        }
        let mut keep = vec![column];
        keep.extend(&self.nuisance);
        let names = keep.iter().map(|&j| self.column_names[j].clone()).collect();
        let intercept = self
            .intercept
            .map(|c| 1 + self.nuisance.iter().position(|&j| j == c).unwrap());
        let design = DesignMatrix::new(
            self.values.select_columns(&keep),
            names,
            vec![0],
            (1..keep.len()).collect(),
            intercept,
        )?;
        Ok((design, 0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhenotypeMatrix {
    values: DMatrix<f64>,
    subject_ids: Vec<String>,
}

impl PhenotypeMatrix {
    /// `values` is subjects x vertices.
    pub fn new(values: DMatrix<f64>, subject_ids: Vec<String>) -> Result<Self> {
        if subject_ids.len() != values.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} subject ids for {} rows",
                subject_ids.len(),
                values.nrows()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite phenotype at subject {}, vertex {}",
                k % values.nrows(),
                k / values.nrows()
            )));
        }
        Ok(PhenotypeMatrix { values, subject_ids })
    }

    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let ids = (0..values.nrows()).map(|i| format!("s{i}")).collect();
        Self::new(values, ids)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn subjects(&self) -> usize {
        self.values.nrows()
    }

    pub fn vertices(&self) -> usize {
        self.values.ncols()
    }

    pub fn select_subjects(&self, rows: &[usize]) -> Self {
        PhenotypeMatrix {
            values: self.values.select_rows(rows),
            subject_ids: rows.iter().map(|&r| self.subject_ids[r].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    #[serde(alias = "classical")]
    Ols,
    Hc4m,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" | "classical" => Ok(Estimator::Ols),
            "hc4m" => Ok(Estimator::Hc4m),
            _ => Err(Error::Validation(format!("unknown estimator '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    pub estimator: Estimator,
    /// Standardise predictors and each vertex's phenotype column, giving
    /// standardised regression coefficients.
    pub standardize: bool,
    pub hc4m: Hc4mConstants,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            estimator: Estimator::Ols,
            standardize: true,
            hc4m: Hc4mConstants::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    Ok,
    /// Phenotype constant across subjects; cannot be standardised.
    ConstantPhenotype,
    /// Residuals vanish, so the standard error is zero and t is undefined.
    DegenerateResidual,
    NonFinite,
}

impl FitFlag {
    pub fn is_ok(self) -> bool {
        self == FitFlag::Ok
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FitFlag::Ok => "ok",
            FitFlag::ConstantPhenotype => "constant_phenotype",
            FitFlag::DegenerateResidual => "degenerate_residual",
            FitFlag::NonFinite => "non_finite",
        }
    }
}

/// Per-vertex estimates for one contrasted predictor. Flagged vertices carry
/// `t = 0` so they never reach significance.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub tstat: Vec<f64>,
    pub flags: Vec<FitFlag>,
    pub residuals: Option<DMatrix<f64>>,
}

/// Standardise all columns except `exempt` to zero mean and unit sample
/// standard deviation.
pub fn standardize_columns(m: &DMatrix<f64>, exempt: &[usize]) -> Result<DMatrix<f64>> {
    let mut out = m.clone();
    for j in (0..m.ncols()).filter(|j| !exempt.contains(j)) {
        let mut col = out.column_mut(j);
        let slice = col.as_mut_slice();
        standardize_in_place(slice).ok_or_else(|| Error::ZeroVariance(format!("column {j}")))?;
    }
    Ok(out)
}

/// Centre and scale to unit sample sd. Returns `None` (leaving `v`
/// untouched) when `v` has zero variance or fewer than two entries.
pub fn standardize_in_place(v: &mut [f64]) -> Option<()> {
    let n = v.len();
    if n < 2 {
        return None;
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    if sd == 0.0 || !sd.is_finite() || v.iter().all(|&x| x == v[0]) {
        return None;
    }
    for x in v.iter_mut() {
        *x = (*x - mean) / sd;
    }
    Some(())
}

/// Phenotype matrix as used by the fits, with a per-vertex flag for columns
/// that could not be standardised.
pub fn prepare_phenotype(y: &PhenotypeMatrix, standardize: bool) -> (DMatrix<f64>, Vec<FitFlag>) {
    let mut values = y.values().clone();
    let mut flags = vec![FitFlag::Ok; values.ncols()];
    if standardize {
        for (j, flag) in flags.iter_mut().enumerate() {
            let mut col = values.column_mut(j);
            if standardize_in_place(col.as_mut_slice()).is_none() {
                *flag = FitFlag::ConstantPhenotype;
            }
        }
    }
    (values, flags)
}

/// Fit the model at every vertex and report the contrasted coefficient.
pub fn mass_univariate(
    design: &DesignMatrix,
    phenotype: &PhenotypeMatrix,
    contrast: usize,
    options: &ModelOptions,
) -> Result<FitResult> {
    if design.subjects() != phenotype.subjects() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} subjects, phenotype has {}",
            design.subjects(),
            phenotype.subjects()
        )));
    }
    if !design.interest_columns().contains(&contrast) {
        return Err(Error::Validation(format!(
            "contrast column {contrast} is not an interest column"
        )));
    }
    let design = if options.standardize {
        design.standardized()?
    } else {
        design.clone()
    };
    let model = LinearModel::new(design.values())?;
    let kernel = ContrastKernel::new(&model, contrast, options.estimator, options.hc4m)?;
    let (y, pre_flags) = prepare_phenotype(phenotype, options.standardize);
    Ok(fit_columns(&kernel, &y, &pre_flags, None))
}

/// Evaluate `kernel` on every column of `y`. `order` applies a subject
/// permutation to the data (see [`ContrastKernel::permuted`]).
pub(crate) fn fit_columns(
    kernel: &ContrastKernel,
    y: &DMatrix<f64>,
    pre_flags: &[FitFlag],
    order: Option<&[usize]>,
) -> FitResult {
    let permuted;
    let kernel = match order {
        Some(order) => {
            permuted = kernel.permuted(order);
            &permuted
        }
        None => kernel,
    };
    let fits: Vec<VertexFit> = (0..y.ncols())
        .into_par_iter()
        .with_min_len(256)
        .map(|v| {
            if pre_flags[v] != FitFlag::Ok {
                VertexFit::flagged(0.0, pre_flags[v])
            } else {
                kernel.fit(y.column(v).as_slice())
            }
        })
        .collect();
    let mut out = FitResult {
        beta: Vec::with_capacity(fits.len()),
        se: Vec::with_capacity(fits.len()),
        tstat: Vec::with_capacity(fits.len()),
        flags: Vec::with_capacity(fits.len()),
        residuals: None,
    };
    for f in fits {
        out.beta.push(f.beta);
        out.se.push(f.se);
        out.tstat.push(f.t);
        out.flags.push(f.flag);
    }
    out
}

/// Fitted values `X b` for a coefficient vector; handy for synthetic data.
pub fn linear_predictor(design: &DesignMatrix, coefficients: &[f64]) -> Result<DVector<f64>> {
    if coefficients.len() != design.values().ncols() {
        return Err(Error::DimensionMismatch("coefficient count".into()));
    }
    Ok(design.values() * DVector::from_column_slice(coefficients))
}
