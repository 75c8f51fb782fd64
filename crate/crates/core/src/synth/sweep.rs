//! Grid sweeps over sample size, signal intensity and pipeline variant.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_detection, inject_signal, DetectionMetrics, NoiseModel, SyntheticCohort, SyntheticSignalSpec};
use crate::error::{Error, Result};
use crate::glm::ModelOptions;
use crate::inference::{
    cluster_extent_from_outcome, correct, run_permutations, CorrectionSpec, PermutationPlan, Statistic,
};
use crate::mesh::TriangleMesh;
use crate::tfce::TfceParams;

/// Pipeline variant scored in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    /// Mass univariate regression on `|t|`.
    Mur,
    Tfce {
        e: f64,
        h: f64,
    },
    ClusterExtent {
        threshold: f64,
    },
}

impl Variant {
    pub fn label(&self) -> String {
        match self {
            Variant::Mur => "mur".into(),
            Variant::Tfce { e, h } => format!("tfce(e={e},h={h})"),
            Variant::ClusterExtent { threshold } => format!("cluster_extent(h={threshold})"),
        }
    }

    fn statistic(&self, config: &SweepConfig) -> Statistic {
        match *self {
            Variant::Mur => Statistic::AbsT,
            Variant::Tfce { e, h } => Statistic::Tfce(TfceParams {
                e,
                h,
                num_steps: config.tfce_steps,
                min_cluster_vertices: config.min_cluster_vertices,
            }),
            Variant::ClusterExtent { threshold } => Statistic::ClusterExtent { threshold },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub intensities: Vec<f64>,
    pub variants: Vec<Variant>,
    pub replicates: usize,
    pub permutations: usize,
    pub seed: u64,
    /// Size of the synthetic cohort that grid cells subsample from.
    pub cohort_subjects: usize,
    pub noise: NoiseModel,
    pub tfce_steps: usize,
    pub min_cluster_vertices: usize,
    pub model: ModelOptions,
    pub correction: CorrectionSpec,
    pub workers: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let tfce = TfceParams::default();
        SweepConfig {
            sizes: vec![50, 100],
            intensities: vec![0.0, 0.5, 1.0],
            variants: vec![Variant::Mur, Variant::Tfce { e: tfce.e, h: tfce.h }],
            replicates: 5,
            permutations: 500,
            seed: 0,
            cohort_subjects: 200,
            noise: NoiseModel::default(),
            tfce_steps: tfce.num_steps,
            min_cluster_vertices: tfce.min_cluster_vertices,
            model: ModelOptions::default(),
            correction: CorrectionSpec::default(),
            workers: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.variants.is_empty() {
            return Err(Error::InvalidParameter("sweep needs replicates and variants".into()));
        }
        if let Some(&n) = self.sizes.iter().find(|&&n| n > self.cohort_subjects) {
            return Err(Error::InvalidParameter(format!(
                "subsample of {n} from a cohort of {}",
                self.cohort_subjects
            )));
        }
        if !(self.correction.q > 0.0 && self.correction.q < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "q = {} outside (0, 1)",
                self.correction.q
            )));
        }
        Ok(())
    }

    fn plan(&self, replicate: usize) -> PermutationPlan {
        PermutationPlan {
            num_permutations: self.permutations,
            seed: replicate_seed(self.seed, replicate, 2),
            model: self.model,
            tfce: None,
            workers: self.workers,
            ..PermutationPlan::default()
        }
    }
}

/// One grid cell: metrics averaged over replicates, with everything needed
/// to recompute the cell in isolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub intensity: f64,
    pub variant: String,
    pub e: Option<f64>,
    pub h: Option<f64>,
    pub threshold: Option<f64>,
    pub seed: u64,
    pub replicates: usize,
    pub permutations: usize,
    pub coverage: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub fdr: f64,
}

impl SweepRow {
    /// `(metric, value)` pairs for a long-format table.
    pub fn metrics(&self) -> [(&'static str, f64); 3] {
        [
            ("sensitivity", self.sensitivity),
            ("specificity", self.specificity),
            ("fdr", self.fdr),
        ]
    }
}

fn replicate_seed(seed: u64, replicate: usize, purpose: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((replicate as u64) << 8) | purpose);
    rng.next_u64()
}

/// Score every variant on replicate `replicate` of cell `(n, intensity)`.
/// The cohort, subsample and permutations depend only on `(seed,
/// replicate)`, so cells share random numbers and differ only in `n` and
/// `intensity`.
pub fn run_replicate(
    mesh: &TriangleMesh,
    beta_map: &[f64],
    config: &SweepConfig,
    n: usize,
    intensity: f64,
    replicate: usize,
) -> Result<Vec<(Variant, DetectionMetrics)>> {
    let cohort = SyntheticCohort::generate(
        mesh,
        config.cohort_subjects,
        &config.noise,
        replicate_seed(config.seed, replicate, 0),
    )?;
    let (design, dosage, null) = cohort.subsample(n, replicate_seed(config.seed, replicate, 1))?;
    let spec = SyntheticSignalSpec {
        beta_map: beta_map.to_vec(),
        intensity,
        predictor: dosage,
    };
    let truth = spec.true_mask();
    let y = inject_signal(&null, &spec)?;
    let contrast = design.column_index("dosage").expect("cohort design has dosage");
    let statistics: Vec<Statistic> = config.variants.iter().map(|v| v.statistic(config)).collect();
    let run = run_permutations(&design, contrast, &y, mesh, &config.plan(replicate), &statistics)?;
    config
        .variants
        .iter()
        .zip(&run.outcomes)
        .map(|(variant, outcome)| {
            let mask = match variant {
                Variant::ClusterExtent { threshold } => {
                    cluster_extent_from_outcome(mesh, &run.fit.tstat, *threshold, outcome)?.mask
                }
                _ => correct(outcome, &outcome.p_raw(), config.correction)?.mask,
            };
            Ok((*variant, evaluate_detection(&mask, &truth)?))
        })
        .collect()
}

/// All variants for one `(n, intensity)` cell, in `config.variants` order.
pub fn run_cell(
    mesh: &TriangleMesh,
    beta_map: &[f64],
    config: &SweepConfig,
    n: usize,
    intensity: f64,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if beta_map.len() != mesh.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "beta map has {} entries for {} vertices",
            beta_map.len(),
            mesh.vertex_count()
        )));
    }
    let k = config.variants.len();
    let mut sums = vec![[0.0f64; 3]; k];
    for rep in 0..config.replicates {
        for (i, (_, m)) in run_replicate(mesh, beta_map, config, n, intensity, rep)?
            .iter()
            .enumerate()
        {
            sums[i][0] += m.sensitivity;
            sums[i][1] += m.specificity;
            sums[i][2] += m.fdr;
        }
    }
    let r = config.replicates as f64;
    let coverage = super::coverage(beta_map);
    Ok(config
        .variants
        .iter()
        .zip(sums)
        .map(|(variant, s)| {
            let (e, h, threshold) = match *variant {
                Variant::Mur => (None, None, None),
                Variant::Tfce { e, h } => (Some(e), Some(h), None),
                Variant::ClusterExtent { threshold } => (None, None, Some(threshold)),
            };
            SweepRow {
                n,
                intensity,
                variant: variant.label(),
                e,
                h,
                threshold,
                seed: config.seed,
                replicates: config.replicates,
                permutations: config.permutations,
                coverage,
                sensitivity: s[0] / r,
                specificity: s[1] / r,
                fdr: s[2] / r,
            }
        })
        .collect())
}

/// Rows in grid order: sizes, then intensities, then variants.
pub fn sweep(mesh: &TriangleMesh, beta_map: &[f64], config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for &n in &config.sizes {
        for &intensity in &config.intensities {
            rows.extend(run_cell(mesh, beta_map, config, n, intensity)?);
        }
    }
    Ok(rows)
}
