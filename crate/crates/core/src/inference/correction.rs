//! Multiple-comparison corrections for vertex-wise p-values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    /// Benjamini-Hochberg step-up.
    #[default]
    Bh,
    /// Adaptive two-stage Benjamini-Hochberg.
    Tsbh,
    /// Family-wise error control from the permutation distribution of the
    /// map maximum.
    Maxstat,
}

impl std::str::FromStr for Correction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bh" => Ok(Correction::Bh),
            "tsbh" => Ok(Correction::Tsbh),
            "maxstat" => Ok(Correction::Maxstat),
            _ => Err(Error::Validation(format!("unknown correction '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adjusted {
    pub adjusted: Vec<f64>,
    pub mask: Vec<bool>,
}

fn check_level(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("level {q} must lie in (0, 1)")))
    }
}

fn check_p(p: &[f64]) -> Result<()> {
    match p.iter().position(|&v| !(v > 0.0 && v <= 1.0)) {
        Some(i) => Err(Error::InvalidParameter(format!(
            "p-value {} at index {i} outside (0, 1]",
            p[i]
        ))),
        None => Ok(()),
    }
}

/// BH adjusted p-values `min_{k >= rank} p_(k) m / k`, capped at 1.
fn bh_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank0, &i) in idx.iter().enumerate().rev() {
        let candidate = p[i] * m as f64 / (rank0 + 1) as f64;
        running = running.min(candidate);
        adjusted[i] = running;
    }
    adjusted
}

pub fn bh_fdr(p: &[f64], q: f64) -> Result<Adjusted> {
    check_level(q)?;
    check_p(p)?;
    let adjusted = bh_adjust(p);
    let mask = adjusted.iter().map(|&a| a <= q).collect();
    Ok(Adjusted { adjusted, mask })
}

/// Two-stage adaptive step-up. Stage one runs BH at `q / (1 + q)`; its `r`
/// rejections give the null count estimate `m0 = m - r` and the stage-two
/// adjusted values are the BH values scaled by `m0 / m`. Adjusted values
/// are floored at the raw p-value, so no vertex with `p > q` is declared.
pub fn two_stage_bh(p: &[f64], q: f64) -> Result<Adjusted> {
    check_level(q)?;
    check_p(p)?;
    let m = p.len();
    let bh = bh_adjust(p);
    let stage_one = q / (1.0 + q);
    let r = bh.iter().filter(|&&a| a <= stage_one).count();
    let m0 = (m - r).max(1);
    let scale = m0 as f64 / m as f64;
    let adjusted: Vec<f64> = bh
        .iter()
        .zip(p)
        .map(|(&a, &raw)| (a * scale).max(raw).min(1.0))
        .collect();
    let mask = adjusted.iter().map(|&a| a <= q).collect();
    Ok(Adjusted { adjusted, mask })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxStatResult {
    pub threshold: f64,
    /// `(1 + #{k : max_k >= |s_i|}) / (N + 1)`.
    pub adjusted: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Rank `k` of the order statistic used as the `1 - alpha` quantile of `N`
/// null values: the smallest value with at least `(1 - alpha)(N + 1)` ranks
/// at or below it, capped at `N`.
pub fn quantile_rank(n: usize, alpha: f64) -> usize {
    let target = ((1.0 - alpha) * (n + 1) as f64 - 1e-9).ceil() as usize;
    target.clamp(1, n)
}

/// The `1 - alpha` permutation quantile of `null_max`.
pub fn null_quantile(null_max: &[f64], alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    if null_max.is_empty() {
        return Err(Error::InvalidParameter("no null maxima".into()));
    }
    let mut sorted = null_max.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[quantile_rank(sorted.len(), alpha) - 1])
}

/// Maximum-statistic FWER control on `|observed|`.
pub fn fwer_maxstat(observed: &[f64], null_max: &[f64], alpha: f64) -> Result<MaxStatResult> {
    let threshold = null_quantile(null_max, alpha)?;
    let mut sorted = null_max.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let adjusted = observed
        .iter()
        .map(|s| {
            let s = s.abs();
            let below = sorted.partition_point(|&v| v < s);
            (1 + n - below) as f64 / (n + 1) as f64
        })
        .collect();
    let mask = observed.iter().map(|s| s.abs() > threshold).collect();
    Ok(MaxStatResult {
        threshold,
        adjusted,
        mask,
    })
}

/// Per-map maxima of `|score|`.
pub fn null_maxima(null_maps: &[Vec<f64>]) -> Vec<f64> {
    null_maps
        .iter()
        .map(|m| m.iter().fold(0.0f64, |a, s| a.max(s.abs())))
        .collect()
}

/// One BH pass over the p-values of all models together, split back per
/// model.
pub fn pooled_fdr(p_maps: &[Vec<f64>], q: f64) -> Result<Vec<Adjusted>> {
    if p_maps.is_empty() {
        return Err(Error::InvalidParameter("no models to pool".into()));
    }
    let all: Vec<f64> = p_maps.iter().flatten().copied().collect();
    let pooled = bh_fdr(&all, q)?;
    let mut out = Vec::with_capacity(p_maps.len());
    let mut offset = 0;
    for map in p_maps {
        let range = offset..offset + map.len();
        out.push(Adjusted {
            adjusted: pooled.adjusted[range.clone()].to_vec(),
            mask: pooled.mask[range].to_vec(),
        });
        offset += map.len();
    }
    Ok(out)
}
