use nalgebra::{DMatrix, DVector};

use super::{Estimator, FitFlag, Hc4mConstants, DEGENERATE_RSS};
use crate::error::{Error, Result};

/// A full-rank design factored once by Householder QR.
#[derive(Debug, Clone)]
pub struct LinearModel {
    x: DMatrix<f64>,
    /// `(X'X)^-1 X'`, p x n.
    pinv: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    leverage: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Classical standard errors from `s^2 (X'X)^-1` with `n - p` degrees of
    /// freedom.
    pub se: DVector<f64>,
    pub sigma2: f64,
}

impl LinearModel {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 {
            return Err(Error::InvalidParameter("design has no columns".into()));
        }
        if n <= p {
            return Err(Error::Underdetermined { rows: n, cols: p });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("design contains non-finite values".into()));
        }
        let sv = x.clone().svd(false, false).singular_values;
        let smax = sv.max();
        let smin = sv.min();
        if !(smin > smax * n.max(p) as f64 * f64::EPSILON) {
            return Err(Error::SingularDesign);
        }
        let qr = x.clone().qr();
        let q = qr.q();
        let r = qr.r();
        let rinv = r
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .ok_or(Error::SingularDesign)?;
        let pinv = &rinv * q.transpose();
        let gram_inv = &rinv * rinv.transpose();
        let leverage = (0..n).map(|i| q.row(i).norm_squared()).collect();
        Ok(LinearModel {
            x: x.clone(),
            pinv,
            gram_inv,
            leverage,
        })
    }

    pub fn subjects(&self) -> usize {
        self.x.nrows()
    }

    pub fn columns(&self) -> usize {
        self.x.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn pseudo_inverse(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn gram_inverse(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    pub fn leverages(&self) -> &[f64] {
        &self.leverage
    }

    pub fn fit(&self, y: &DVector<f64>) -> Result<OlsFit> {
        let (n, p) = self.x.shape();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "response has {} rows, design has {n}",
                y.len()
            )));
        }
        let coefficients = &self.pinv * y;
        let residuals = y - &self.x * &coefficients;
        let sigma2 = residuals.norm_squared() / (n - p) as f64;
        let se = self.gram_inv.diagonal().map(|g| (sigma2 * g).sqrt());
        Ok(OlsFit {
            coefficients,
            residuals,
            se,
            sigma2,
        })
    }
}

/// Least squares fit of `y` on `x`.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    LinearModel::new(x)?.fit(y)
}

/// Diagonal of the hat matrix.
pub fn leverages(x: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(DVector::from_vec(LinearModel::new(x)?.leverage))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexFit {
    pub beta: f64,
    pub se: f64,
    pub t: f64,
    pub flag: FitFlag,
}

impl VertexFit {
    pub fn flagged(beta: f64, flag: FitFlag) -> Self {
        VertexFit {
            beta,
            se: 0.0,
            t: 0.0,
            flag,
        }
    }
}

/// Everything needed to get the contrasted coefficient, its standard error
/// and t from one response column, laid out for tight loops.
#[derive(Debug, Clone)]
pub struct ContrastKernel {
    n: usize,
    p: usize,
    contrast: usize,
    estimator: Estimator,
    /// Row-major p x n copy of the pseudo-inverse.
    pinv: Vec<f64>,
    /// Row-major n x p copy of the design.
    design: Vec<f64>,
    gram_inv_cc: f64,
    /// Per-subject HC4m sandwich weights for the contrast row.
    hc_weights: Vec<f64>,
}

impl ContrastKernel {
    pub fn new(model: &LinearModel, contrast: usize, estimator: Estimator, constants: Hc4mConstants) -> Result<Self> {
        let (n, p) = model.x.shape();
        if contrast >= p {
            return Err(Error::InvalidParameter(format!(
                "contrast {contrast} out of range for {p} columns"
            )));
        }
        let mut pinv = vec![0.0; p * n];
        let mut design = vec![0.0; n * p];
        for m in 0..n {
            for l in 0..p {
                pinv[l * n + m] = model.pinv[(l, m)];
                design[m * p + l] = model.x[(m, l)];
            }
        }
        let hc_weights = match estimator {
            Estimator::Ols => Vec::new(),
            Estimator::Hc4m => {
                let discount = super::hc4m::discounts(&model.leverage, p, constants)?;
                (0..n)
                    .map(|m| {
                        let a = model.pinv[(contrast, m)];
                        a * a / discount[m]
                    })
                    .collect()
            }
        };
        Ok(ContrastKernel {
            n,
            p,
            contrast,
            estimator,
            pinv,
            design,
            gram_inv_cc: model.gram_inv[(contrast, contrast)],
            hc_weights,
        })
    }

    pub fn subjects(&self) -> usize {
        self.n
    }

    /// Kernel that fits the permuted response `y*[i] = y[order[i]]` while
    /// being fed the unpermuted `y`: the subject-indexed model data are
    /// scattered to their permuted slots instead.
    pub fn permuted(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.n, "permutation length");
        let (n, p) = (self.n, self.p);
        let mut out = self.clone();
        for (i, &m) in order.iter().enumerate() {
            for l in 0..p {
                out.pinv[l * n + m] = self.pinv[l * n + i];
                out.design[m * p + l] = self.design[i * p + l];
            }
            if !self.hc_weights.is_empty() {
                out.hc_weights[m] = self.hc_weights[i];
            }
        }
        out
    }

    pub fn fit(&self, y: &[f64]) -> VertexFit {
        let (n, p) = (self.n, self.p);
        debug_assert_eq!(y.len(), n);
        let mut coef = vec![0.0; p];
        for (l, c) in coef.iter_mut().enumerate() {
            let row = &self.pinv[l * n..(l + 1) * n];
            *c = row.iter().zip(y).map(|(a, b)| a * b).sum();
        }
        let beta = coef[self.contrast];
        let mut rss = 0.0;
        let mut yy = 0.0;
        let mut hc = 0.0;
        for (m, &ym) in y.iter().enumerate() {
            let row = &self.design[m * p..(m + 1) * p];
            let fitted: f64 = row.iter().zip(&coef).map(|(x, c)| x * c).sum();
            let e = ym - fitted;
            let e2 = e * e;
            rss += e2;
            yy += ym * ym;
            if !self.hc_weights.is_empty() {
                hc += self.hc_weights[m] * e2;
            }
        }
        if !beta.is_finite() || !rss.is_finite() {
            return VertexFit::flagged(beta, FitFlag::NonFinite);
        }
        if rss <= DEGENERATE_RSS * yy {
            return VertexFit::flagged(beta, FitFlag::DegenerateResidual);
        }
        let se = match self.estimator {
            Estimator::Ols => (rss / (n - p) as f64 * self.gram_inv_cc).sqrt(),
            Estimator::Hc4m => hc.sqrt(),
        };
        if se == 0.0 {
            return VertexFit::flagged(beta, FitFlag::DegenerateResidual);
        }
        VertexFit {
            beta,
            se,
            t: beta / se,
            flag: FitFlag::Ok,
        }
    }
}
