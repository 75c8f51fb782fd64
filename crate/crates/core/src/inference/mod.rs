//! Freedman-Lane permutation inference and multiple-testing correction.
//!
//! The observed model is fitted to the phenotype as given. Each permutation
//! shuffles the rows of the nuisance-residualised phenotype `R_Z Y` and
//! refits the full model; the shuffle for permutation `k` depends only on
//! `(seed, k)`, so permutations can run in any order on any number of
//! workers and still produce identical exceedance counts.

mod cluster_extent;
mod correction;

pub(crate) use cluster_extent::from_outcome as cluster_extent_from_outcome;
pub use cluster_extent::{
    cluster_extent_inference, ClusterExtentResult, SignedCluster, SignificantCluster, CLUSTER_ALPHA,
};
pub use correction::{
    bh_fdr, fwer_maxstat, null_maxima, null_quantile, pooled_fdr, quantile_rank, two_stage_bh, Adjusted, Correction,
    MaxStatResult,
};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{
    fit_columns, prepare_phenotype, ContrastKernel, DesignMatrix, FitFlag, FitResult, LinearModel, ModelOptions,
    PhenotypeMatrix,
};
use crate::mesh::TriangleMesh;
use crate::tfce::{TfceParams, TfceWorkspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    FreedmanLane,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PermutationPlan {
    pub num_permutations: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Estimator and standardisation, shared by observed and permuted fits.
    pub model: ModelOptions,
    /// `None` runs plain mass univariate inference on `|t|`.
    pub tfce: Option<TfceParams>,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub workers: Option<usize>,
}

impl Default for PermutationPlan {
    fn default() -> Self {
        PermutationPlan {
            num_permutations: 1000,
            seed: 0,
            scheme: Scheme::FreedmanLane,
            model: ModelOptions::default(),
            tfce: Some(TfceParams::default()),
            workers: None,
        }
    }
}

impl PermutationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.num_permutations == 0 {
            return Err(Error::InvalidParameter("permutation count must be >= 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("worker count must be >= 1".into()));
        }
        if let Some(t) = &self.tfce {
            t.validate()?;
        }
        Ok(())
    }
}

/// Row order of permutation `index`: permuted row `i` takes original row
/// `order[i]`.
pub fn permutation_order(seed: u64, index: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// `I - Z (Z'Z)^-1 Z'`.
pub fn residual_forming_matrix(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = z.nrows();
    let model = LinearModel::new(z)?;
    Ok(DMatrix::identity(n, n) - z * model.pseudo_inverse())
}

/// `R_Z Y` without forming the n x n matrix.
pub fn residualize(z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if z.ncols() == 0 {
        return Ok(y.clone());
    }
    let model = LinearModel::new(z)?;
    Ok(y - z * (model.pseudo_inverse() * y))
}

/// Map-level statistic evaluated on the observed and every permuted t-map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistic {
    Tfce(TfceParams),
    /// Plain mass univariate regression: the statistic is `|t|`.
    AbsT,
    /// Supra-threshold clusters at `t >= h` and `t <= -h`, scored by area.
    ClusterExtent {
        threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticOutcome {
    pub statistic: Statistic,
    /// Signed TFCE, t, or the extent of the vertex's observed cluster.
    pub observed: Vec<f64>,
    /// `#{k : |null_k[v]| >= |observed[v]|}`; empty for cluster extent.
    pub exceedances: Vec<u32>,
    /// Per permutation maximum of `|score|` (largest cluster extent for the
    /// cluster statistic), in permutation order.
    pub null_max: Vec<f64>,
}

impl StatisticOutcome {
    /// `(1 + exceedances) / (1 + N)`.
    pub fn p_raw(&self) -> Vec<f64> {
        let denom = (self.null_max.len() + 1) as f64;
        self.exceedances.iter().map(|&b| (1 + b) as f64 / denom).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationRun {
    pub fit: FitResult,
    pub outcomes: Vec<StatisticOutcome>,
    pub num_permutations: usize,
}

/// Run the observed fit and `plan.num_permutations` Freedman-Lane
/// permutations, scoring every requested statistic on each map.
pub fn run_permutations(
    design: &DesignMatrix,
    contrast: usize,
    phenotype: &PhenotypeMatrix,
    mesh: &TriangleMesh,
    plan: &PermutationPlan,
    statistics: &[Statistic],
) -> Result<PermutationRun> {
    plan.validate()?;
    for s in statistics {
        match s {
            Statistic::Tfce(p) => p.validate()?,
            Statistic::ClusterExtent { threshold } if !(*threshold > 0.0) => {
                return Err(Error::InvalidParameter(format!(
                    "cluster-forming threshold {threshold} must be > 0"
                )))
            }
            _ => {}
        }
    }
    if phenotype.vertices() != mesh.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "phenotype has {} vertices, mesh has {}",
            phenotype.vertices(),
            mesh.vertex_count()
        )));
    }
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
    with_workers(plan.workers, || {
        permutation_pass(design, contrast, phenotype, mesh, plan, statistics)
    })?
}

fn permutation_pass(
    design: &DesignMatrix,
    contrast: usize,
    phenotype: &PhenotypeMatrix,
    mesh: &TriangleMesh,
    plan: &PermutationPlan,
    statistics: &[Statistic],
) -> Result<PermutationRun> {
    let design = if plan.model.standardize {
        design.standardized()?
    } else {
        design.clone()
    };
    let model = LinearModel::new(design.values())?;
    let kernel = ContrastKernel::new(&model, contrast, plan.model.estimator, plan.model.hc4m)?;
    let (y, pre_flags) = prepare_phenotype(phenotype, plan.model.standardize);
    let fit = fit_columns(&kernel, &y, &pre_flags, None);
    let y_res = residualize(&design.nuisance_matrix(), &y)?;

    let v = mesh.vertex_count();
    let mut ws = TfceWorkspace::new(v);
    let mut observed = Vec::with_capacity(statistics.len());
    for s in statistics {
        observed.push(score_map(mesh, &fit.tstat, s, &mut ws)?);
    }

    let n_perm = plan.num_permutations;
    let acc = (0..n_perm)
        .into_par_iter()
        .try_fold(
            || Accumulator::new(v, statistics.len()),
            |mut acc, k| -> Result<Accumulator> {
                let order = permutation_order(plan.seed, k as u64, y_res.nrows());
                let permuted = kernel.permuted(&order);
                for (vertex, t) in acc.tstat.iter_mut().enumerate() {
                    *t = if pre_flags[vertex] == FitFlag::Ok {
                        permuted.fit(y_res.column(vertex).as_slice()).t
                    } else {
                        0.0
                    };
                }
                for (s_idx, s) in statistics.iter().enumerate() {
                    let map = score_map(mesh, &acc.tstat, s, &mut acc.ws)?;
                    let max = match s {
                        Statistic::ClusterExtent { .. } => map.null_max,
                        _ => {
                            let counts = &mut acc.exceedances[s_idx];
                            for (c, (null, obs)) in
                                counts.iter_mut().zip(map.scores.iter().zip(&observed[s_idx].scores))
                            {
                                if null.abs() >= obs.abs() {
                                    *c += 1;
                                }
                            }
                            map.scores.iter().fold(0.0f64, |a, s| a.max(s.abs()))
                        }
                    };
                    acc.null_max.push((k, s_idx, max));
                }
                Ok(acc)
            },
        )
        .try_reduce(
            || Accumulator::new(v, statistics.len()),
            |mut a, b| {
                for (ca, cb) in a.exceedances.iter_mut().zip(&b.exceedances) {
                    for (x, y) in ca.iter_mut().zip(cb) {
                        *x += y;
                    }
                }
                a.null_max.extend(b.null_max);
                Ok(a)
            },
        )?;

    let mut null_max = vec![vec![0.0; n_perm]; statistics.len()];
    for (k, s_idx, m) in acc.null_max {
        null_max[s_idx][k] = m;
    }
    let outcomes = statistics
        .iter()
        .zip(observed)
        .zip(acc.exceedances)
        .zip(null_max)
        .map(|(((s, obs), exceed), nm)| {
            let exceedances = match s {
                Statistic::ClusterExtent { .. } => Vec::new(),
                _ => exceed,
            };
            StatisticOutcome {
                statistic: *s,
                observed: obs.scores,
                exceedances,
                null_max: nm,
            }
        })
        .collect();
    Ok(PermutationRun {
        fit,
        outcomes,
        num_permutations: n_perm,
    })
}

struct Accumulator {
    ws: TfceWorkspace,
    tstat: Vec<f64>,
    exceedances: Vec<Vec<u32>>,
    null_max: Vec<(usize, usize, f64)>,
}

impl Accumulator {
    fn new(vertices: usize, statistics: usize) -> Self {
        Accumulator {
            ws: TfceWorkspace::new(vertices),
            tstat: vec![0.0; vertices],
            exceedances: vec![vec![0; vertices]; statistics],
            null_max: Vec::new(),
        }
    }
}

struct ScoredMap {
    scores: Vec<f64>,
    /// Largest cluster extent, for the cluster statistic.
    null_max: f64,
}

fn score_map(mesh: &TriangleMesh, tstat: &[f64], statistic: &Statistic, ws: &mut TfceWorkspace) -> Result<ScoredMap> {
    match statistic {
        Statistic::Tfce(params) => {
            let mut scores = Vec::new();
            ws.transform(mesh, tstat, params, &mut scores)?;
            Ok(ScoredMap { scores, null_max: 0.0 })
        }
        Statistic::AbsT => Ok(ScoredMap {
            scores: tstat.to_vec(),
            null_max: 0.0,
        }),
        Statistic::ClusterExtent { threshold } => {
            let clusters = cluster_extent::signed_clusters(mesh, tstat, *threshold)?;
            let mut scores = vec![0.0; tstat.len()];
            let mut max = 0.0f64;
            for c in &clusters {
                max = max.max(c.cluster.extent);
                for &v in &c.cluster.vertex_ids {
                    scores[v] = c.cluster.extent;
                }
            }
            Ok(ScoredMap { scores, null_max: max })
        }
    }
}

/// Run `f` on a dedicated pool of `workers` threads, or on the current pool.
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectionSpec {
    pub method: Correction,
    pub q: f64,
}

impl Default for CorrectionSpec {
    fn default() -> Self {
        CorrectionSpec {
            method: Correction::Bh,
            q: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub fit: FitResult,
    /// Signed TFCE scores, or t in plain mode.
    pub observed: Vec<f64>,
    pub p_raw: Vec<f64>,
    pub p_adjusted: Vec<f64>,
    pub mask: Vec<bool>,
    /// Per-permutation maxima of `|score|`.
    pub null_max: Vec<f64>,
    /// Score cut-off when the correction is `maxstat`.
    pub fwer_threshold: Option<f64>,
    pub plan: PermutationPlan,
    pub correction: CorrectionSpec,
}

impl InferenceResult {
    /// Fraction of the mesh surface covered by the significance mask.
    pub fn significant_area(&self, mesh: &TriangleMesh) -> f64 {
        mesh.masked_area(&self.mask) / mesh.vertex_area().iter().sum::<f64>()
    }
}

/// Freedman-Lane permutation inference on TFCE scores (or `|t|` when
/// `plan.tfce` is `None`), followed by the requested correction.
pub fn freedman_lane(
    design: &DesignMatrix,
    contrast: usize,
    phenotype: &PhenotypeMatrix,
    mesh: &TriangleMesh,
    plan: &PermutationPlan,
    correction: CorrectionSpec,
) -> Result<InferenceResult> {
    let statistic = match plan.tfce {
        Some(p) => Statistic::Tfce(p),
        None => Statistic::AbsT,
    };
    let run = run_permutations(design, contrast, phenotype, mesh, plan, &[statistic])?;
    let outcome = run.outcomes.into_iter().next().expect("one statistic");
    let p_raw = outcome.p_raw();
    let corrected = correct(&outcome, &p_raw, correction)?;
    Ok(InferenceResult {
        fit: run.fit,
        observed: outcome.observed,
        p_raw,
        p_adjusted: corrected.adjusted,
        mask: corrected.mask,
        null_max: outcome.null_max,
        fwer_threshold: corrected.threshold,
        plan: *plan,
        correction,
    })
}

pub(crate) struct Corrected {
    pub adjusted: Vec<f64>,
    pub mask: Vec<bool>,
    pub threshold: Option<f64>,
}

pub(crate) fn correct(outcome: &StatisticOutcome, p_raw: &[f64], spec: CorrectionSpec) -> Result<Corrected> {
    Ok(match spec.method {
        Correction::Bh => {
            let a = bh_fdr(p_raw, spec.q)?;
            Corrected {
                adjusted: a.adjusted,
                mask: a.mask,
                threshold: None,
            }
        }
        Correction::Tsbh => {
            let a = two_stage_bh(p_raw, spec.q)?;
            Corrected {
                adjusted: a.adjusted,
                mask: a.mask,
                threshold: None,
            }
        }
        Correction::Maxstat => {
            let m = fwer_maxstat(&outcome.observed, &outcome.null_max, spec.q)?;
            Corrected {
                adjusted: m.adjusted,
                mask: m.mask,
                threshold: Some(m.threshold),
            }
        }
    })
}
