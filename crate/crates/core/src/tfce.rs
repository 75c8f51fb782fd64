//! Threshold-free cluster enhancement on triangle meshes.
//!
//! For a vertex `p` with statistic `h_p > 0` the score is the discrete sum
//! over thresholds `h` in `(0, h_p]` of `e(h)^E * h^H * dh`, where `e(h)` is
//! the area of the connected supra-threshold cluster containing `p`.
//! Thresholds sample `(0, max t]` uniformly in `num_steps` steps; at each
//! threshold every qualifying cluster is found once and its contribution
//! credited to all of its members. Negative statistics are handled by
//! running the same procedure on `-t` and negating, giving a signed map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{ClusterScanner, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfceParams {
    /// Extent exponent.
    pub e: f64,
    /// Height exponent.
    pub h: f64,
    /// Threshold samples per sign.
    pub num_steps: usize,
    /// Clusters with fewer vertices contribute nothing.
    pub min_cluster_vertices: usize,
}

impl Default for TfceParams {
    fn default() -> Self {
        TfceParams {
            e: 0.5,
            h: 2.0,
            num_steps: 100,
            min_cluster_vertices: 3,
        }
    }
}

impl TfceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.e >= 0.0 && self.e.is_finite()) || !(self.h >= 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "TFCE exponents must be finite and >= 0 (E={}, H={})",
                self.e, self.h
            )));
        }
        if self.num_steps == 0 {
            return Err(Error::InvalidParameter("TFCE num_steps must be >= 1".into()));
        }
        if self.min_cluster_vertices == 0 {
            return Err(Error::InvalidParameter("TFCE min_cluster_vertices must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfceMap {
    pub scores: Vec<f64>,
    pub params: TfceParams,
}

/// Thresholds `max * k / steps` for `k = 1..=steps` and the step width
/// `max / steps`. The last threshold is exactly `max`.
pub fn threshold_grid(max: f64, steps: usize) -> (Vec<f64>, f64) {
    let grid = (1..=steps).map(|k| max * (k as f64 / steps as f64)).collect();
    (grid, max / steps as f64)
}

pub fn tfce_transform(mesh: &TriangleMesh, tmap: &[f64], params: &TfceParams) -> Result<TfceMap> {
    let mut ws = TfceWorkspace::new(mesh.vertex_count());
    let mut scores = Vec::new();
    ws.transform(mesh, tmap, params, &mut scores)?;
    Ok(TfceMap {
        scores,
        params: *params,
    })
}

/// Scratch buffers for repeated transforms on one mesh.
#[derive(Debug, Clone)]
pub struct TfceWorkspace {
    scanner: ClusterScanner,
    side: Vec<f64>,
    acc: Vec<f64>,
    order: Vec<usize>,
}

impl TfceWorkspace {
    pub fn new(vertex_count: usize) -> Self {
        TfceWorkspace {
            scanner: ClusterScanner::new(vertex_count),
            side: vec![0.0; vertex_count],
            acc: vec![0.0; vertex_count],
            order: Vec::with_capacity(vertex_count),
        }
    }

    pub fn transform(
        &mut self,
        mesh: &TriangleMesh,
        tmap: &[f64],
        params: &TfceParams,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        params.validate()?;
        let n = mesh.vertex_count();
        if tmap.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "t-map has {} values, mesh has {n} vertices",
                tmap.len()
            )));
        }
        if let Some(v) = tmap.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFiniteStatistic(v));
        }
        out.clear();
        out.resize(n, 0.0);

        self.side.copy_from_slice(tmap);
        self.one_side(mesh, params);
        for (o, &a) in out.iter_mut().zip(&self.acc) {
            *o = a;
        }

        for (s, &t) in self.side.iter_mut().zip(tmap) {
            *s = -t;
        }
        self.one_side(mesh, params);
        for (o, (&a, &t)) in out.iter_mut().zip(self.acc.iter().zip(tmap)) {
            if t < 0.0 {
                *o = -a;
            }
        }
        Ok(())
    }

    /// Accumulate positive-side scores of `self.side` into `self.acc`.
    fn one_side(&mut self, mesh: &TriangleMesh, params: &TfceParams) {
        self.acc.iter_mut().for_each(|a| *a = 0.0);
        let side = &self.side;
        let max = side.iter().copied().fold(0.0f64, f64::max);
        if max <= 0.0 {
            return;
        }
        self.order.clear();
        self.order.extend((0..side.len()).filter(|&v| side[v] > 0.0));
        self.order
            .sort_unstable_by(|&a, &b| side[b].total_cmp(&side[a]).then(a.cmp(&b)));

        let (grid, dh) = threshold_grid(max, params.num_steps);
        let mut live = self.order.len();
        let acc = &mut self.acc;
        for &h in &grid {
            while live > 0 && side[self.order[live - 1]] < h {
                live -= 1;
            }
            if live < params.min_cluster_vertices {
                break;
            }
            let height = h.powf(params.h);
            self.scanner.scan(
                mesh,
                self.order[..live].iter().copied(),
                |v| side[v] >= h,
                |members, extent| {
                    if members.len() >= params.min_cluster_vertices {
                        let c = extent.powf(params.e) * height * dh;
                        for &m in members {
                            acc[m] += c;
                        }
                    }
                },
            );
        }
    }
}
