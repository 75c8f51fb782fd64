//! Cluster-extent thresholding: clusters are formed at a fixed t threshold
//! and declared significant when their area exceeds the 95th percentile of
//! the largest permuted cluster.

use super::{null_quantile, run_permutations, PermutationPlan, Statistic, StatisticOutcome};
use crate::error::Result;
use crate::glm::{DesignMatrix, PhenotypeMatrix};
use crate::mesh::{thresholded_components, Direction, TriangleMesh, VertexCluster};

/// Family-wise level for the extent threshold.
pub const CLUSTER_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SignedCluster {
    pub direction: Direction,
    pub cluster: VertexCluster,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificantCluster {
    pub cluster: SignedCluster,
    /// `(1 + #{k : max_k >= extent}) / (N + 1)`.
    pub p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterExtentResult {
    pub forming_threshold: f64,
    /// Extent cut-off from the permutation distribution of the largest
    /// cluster.
    pub extent_threshold: f64,
    pub clusters: Vec<SignificantCluster>,
    pub mask: Vec<bool>,
    pub tstat: Vec<f64>,
    pub null_max: Vec<f64>,
}

/// Positive clusters at `t >= h` followed by negative ones at `t <= -h`.
pub(crate) fn signed_clusters(mesh: &TriangleMesh, t: &[f64], h: f64) -> Result<Vec<SignedCluster>> {
    let mut out: Vec<SignedCluster> = thresholded_components(mesh, t, h, Direction::Positive)?
        .into_iter()
        .map(|cluster| SignedCluster {
            direction: Direction::Positive,
            cluster,
        })
        .collect();
    out.extend(
        thresholded_components(mesh, t, -h, Direction::Negative)?
            .into_iter()
            .map(|cluster| SignedCluster {
                direction: Direction::Negative,
                cluster,
            }),
    );
    Ok(out)
}

pub fn cluster_extent_inference(
    mesh: &TriangleMesh,
    design: &DesignMatrix,
    contrast: usize,
    phenotype: &PhenotypeMatrix,
    forming_threshold: f64,
    plan: &PermutationPlan,
) -> Result<ClusterExtentResult> {
    let statistic = Statistic::ClusterExtent {
        threshold: forming_threshold,
    };
    let run = run_permutations(design, contrast, phenotype, mesh, plan, &[statistic])?;
    let outcome = &run.outcomes[0];
    from_outcome(mesh, &run.fit.tstat, forming_threshold, outcome)
}

/// Assemble the cluster verdicts from an already computed permutation run.
pub(crate) fn from_outcome(
    mesh: &TriangleMesh,
    tstat: &[f64],
    forming_threshold: f64,
    outcome: &StatisticOutcome,
) -> Result<ClusterExtentResult> {
    let extent_threshold = null_quantile(&outcome.null_max, CLUSTER_ALPHA)?;
    let mut sorted = outcome.null_max.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut mask = vec![false; mesh.vertex_count()];
    let clusters = signed_clusters(mesh, tstat, forming_threshold)?
        .into_iter()
        .map(|c| {
            let extent = c.cluster.extent;
            let below = sorted.partition_point(|&m| m < extent);
            let significant = extent > extent_threshold;
            if significant {
                for &v in &c.cluster.vertex_ids {
                    mask[v] = true;
                }
            }
            SignificantCluster {
                cluster: c,
                p: (1 + n - below) as f64 / (n + 1) as f64,
                significant,
            }
        })
        .collect();
    Ok(ClusterExtentResult {
        forming_threshold,
        extent_threshold,
        clusters,
        mask,
        tstat: tstat.to_vec(),
        null_max: outcome.null_max.clone(),
    })
}
