//! Synthetic signals for power and false-discovery experiments.
//!
//! A null cohort is seeded Gaussian noise, optionally smoothed over the mesh
//! to give it spatial coherence. A known effect `I * beta[v] * x[s]` is
//! added on top and the pipeline's detections are scored against the
//! support of `beta`.

mod sweep;

pub use sweep::{run_cell, run_replicate, sweep, SweepConfig, SweepRow, Variant};

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{DesignMatrix, PhenotypeMatrix};
use crate::mesh::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub sd: f64,
    /// Neighbour-averaging passes applied to each subject's map.
    pub smoothing_passes: usize,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sd: 1.0,
            smoothing_passes: 2,
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seeded subjects x vertices noise, smoothed `noise.smoothing_passes` times
/// by replacing each value with the mean over its closed neighbourhood.
pub fn make_null_phenotype(
    mesh: &TriangleMesh,
    subjects: usize,
    noise: &NoiseModel,
    seed: u64,
) -> Result<PhenotypeMatrix> {
    if subjects == 0 {
        return Err(Error::InvalidParameter("subject count must be positive".into()));
    }
    let normal = Normal::new(0.0, noise.sd).map_err(|e| Error::InvalidParameter(format!("noise sd: {e}")))?;
    let v = mesh.vertex_count();
    let mut rng = rng_for(seed, 0);
    // row-major draw order: subject by subject
    let mut rows: Vec<Vec<f64>> = (0..subjects)
        .map(|_| (0..v).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    let mut scratch = vec![0.0; v];
    for row in &mut rows {
        for _ in 0..noise.smoothing_passes {
            for (i, s) in scratch.iter_mut().enumerate() {
                let nb = mesh.neighbors(i);
                let total: f64 = row[i] + nb.iter().map(|&j| row[j]).sum::<f64>();
                *s = total / (1 + nb.len()) as f64;
            }
            row.copy_from_slice(&scratch);
        }
    }
    PhenotypeMatrix::from_matrix(DMatrix::from_fn(subjects, v, |s, i| rows[s][i]))
}

/// Posterior allele dosage in `[0, 2]`: a binomial genotype with minor
/// allele frequency `maf` blurred by imputation noise.
pub fn allele_dosage(subjects: usize, maf: f64, seed: u64) -> Result<Vec<f64>> {
    let geno = Binomial::new(2, maf).map_err(|e| Error::InvalidParameter(format!("maf: {e}")))?;
    let blur = Normal::new(0.0, 0.1).expect("valid sd");
    let mut rng = rng_for(seed, 1);
    Ok((0..subjects)
        .map(|_| (geno.sample(&mut rng) as f64 + blur.sample(&mut rng)).clamp(0.0, 2.0))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSignalSpec {
    pub beta_map: Vec<f64>,
    pub intensity: f64,
    pub predictor: Vec<f64>,
}

impl SyntheticSignalSpec {
    /// Fraction of vertices with a non-zero coefficient.
    pub fn coverage(&self) -> f64 {
        coverage(&self.beta_map)
    }

    pub fn true_mask(&self) -> Vec<bool> {
        self.beta_map.iter().map(|&b| b != 0.0).collect()
    }
}

pub fn coverage(beta_map: &[f64]) -> f64 {
    beta_map.iter().filter(|&&b| b != 0.0).count() as f64 / beta_map.len().max(1) as f64
}

/// `Y'[s, v] = Y[s, v] + I * beta[v] * x[s]`.
pub fn inject_signal(y: &PhenotypeMatrix, spec: &SyntheticSignalSpec) -> Result<PhenotypeMatrix> {
    if spec.beta_map.len() != y.vertices() || spec.predictor.len() != y.subjects() {
        return Err(Error::DimensionMismatch(format!(
            "signal is {} subjects x {} vertices, phenotype is {} x {}",
            spec.predictor.len(),
            spec.beta_map.len(),
            y.subjects(),
            y.vertices()
        )));
    }
    let mut values = y.values().clone();
    for (v, &b) in spec.beta_map.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        for (s, &x) in spec.predictor.iter().enumerate() {
            values[(s, v)] += spec.intensity * b * x;
        }
    }
    PhenotypeMatrix::new(values, y.subject_ids().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Edge-length geodesic distance from the nearest centre.
pub fn geodesic_distance(mesh: &TriangleMesh, centers: &[usize]) -> Vec<f64> {
    let pts = mesh.vertices();
    let mut dist = vec![f64::INFINITY; mesh.vertex_count()];
    let mut heap = BinaryHeap::new();
    for &c in centers {
        dist[c] = 0.0;
        heap.push(Frontier(0.0, c));
    }
    while let Some(Frontier(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &w in mesh.neighbors(v) {
            let len = (0..3).map(|k| (pts[v][k] - pts[w][k]).powi(2)).sum::<f64>().sqrt();
            if d + len < dist[w] {
                dist[w] = d + len;
                heap.push(Frontier(d + len, w));
            }
        }
    }
    dist
}

/// Patch-shaped coefficient map covering `coverage` of the vertices nearest
/// (geodesically) to `centers`. Coefficients fall linearly from `sign` at a
/// centre to `sign * floor` at the patch rim; everything else is zero.
pub fn patch_beta_map(
    mesh: &TriangleMesh,
    coverage: f64,
    centers: &[usize],
    sign: f64,
    floor: f64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&coverage) || !(0.0..=1.0).contains(&floor) {
        return Err(Error::InvalidParameter(format!(
            "coverage {coverage} and floor {floor} must lie in [0, 1]"
        )));
    }
    if centers.is_empty() || centers.iter().any(|&c| c >= mesh.vertex_count()) {
        return Err(Error::InvalidParameter("patch centres out of range".into()));
    }
    let n = mesh.vertex_count();
    let count = (coverage * n as f64).round() as usize;
    let dist = geodesic_distance(mesh, centers);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    let chosen = &order[..count];
    let rim = chosen.iter().map(|&v| dist[v]).fold(0.0f64, f64::max);
    let mut beta = vec![0.0; n];
    for &v in chosen {
        let frac = if rim > 0.0 { dist[v] / rim } else { 0.0 };
        beta[v] = sign * (1.0 - (1.0 - floor) * frac);
    }
    Ok(beta)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionMetrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub fdr: f64,
    #[serde(skip)]
    pub true_mask: Vec<bool>,
    #[serde(skip)]
    pub detected_mask: Vec<bool>,
}

/// Confusion-matrix fractions. Empty denominators give 0 for sensitivity
/// and fdr and 1 for specificity.
pub fn evaluate_detection(detected: &[bool], truth: &[bool]) -> Result<DetectionMetrics> {
    if detected.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} detections for {} vertices",
            detected.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&d, &t) in detected.iter().zip(truth) {
        match (d, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize, empty: f64| if b == 0 { empty } else { a as f64 / b as f64 };
    Ok(DetectionMetrics {
        sensitivity: ratio(tp, tp + fn_, 0.0),
        specificity: ratio(tn, tn + fp, 1.0),
        fdr: fp as f64 / (fp + tp).max(1) as f64,
        true_mask: truth.to_vec(),
        detected_mask: detected.to_vec(),
    })
}

/// A synthetic cohort: allele dosage of interest, age and sex as nuisance
/// covariates, and a null phenotype that carries covariate effects but no
/// dosage effect.
#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub design: DesignMatrix,
    pub dosage: Vec<f64>,
    pub null: PhenotypeMatrix,
}

impl SyntheticCohort {
    pub fn generate(mesh: &TriangleMesh, subjects: usize, noise: &NoiseModel, seed: u64) -> Result<Self> {
        let dosage = allele_dosage(subjects, 0.3, seed)?;
        let mut rng = rng_for(seed, 2);
        let age_dist = Normal::new(55.0, 12.0).expect("valid sd");
        let age: Vec<f64> = (0..subjects).map(|_| age_dist.sample(&mut rng)).collect();
        let sex: Vec<f64> = (0..subjects).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect();
        let design = DesignMatrix::with_intercept(
            &[("dosage", &dosage), ("age", &age), ("sex", &sex)],
            &["dosage"],
            &["age", "sex"],
        )?;
        let noise_part = make_null_phenotype(mesh, subjects, noise, seed ^ 0x5eed)?;
        let mut values = noise_part.values().clone();
        for s in 0..subjects {
            let shift = 0.02 * (age[s] - 55.0) + 0.3 * sex[s];
            for v in 0..values.ncols() {
                values[(s, v)] += shift;
            }
        }
        Ok(SyntheticCohort {
            design,
            dosage,
            null: PhenotypeMatrix::from_matrix(values)?,
        })
    }

    pub fn subjects(&self) -> usize {
        self.dosage.len()
    }

    /// First `n` subjects of a seeded shuffle: subsampling without
    /// replacement, nested across `n` for a fixed seed.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<(DesignMatrix, Vec<f64>, PhenotypeMatrix)> {
        if n > self.subjects() {
            return Err(Error::InvalidParameter(format!(
                "subsample of {n} from a cohort of {}",
                self.subjects()
            )));
        }
        let order = crate::inference::permutation_order(seed, u64::MAX, self.subjects());
        let rows = &order[..n];
        Ok((
            self.design.select_subjects(rows)?,
            rows.iter().map(|&r| self.dosage[r]).collect(),
            self.null.select_subjects(rows),
        ))
    }
}
