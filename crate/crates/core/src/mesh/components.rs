use crate::error::{Error, Result};

use super::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Select `stat >= h`.
    Positive,
    /// Select `stat <= h`.
    Negative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexCluster {
    /// Member vertices, ascending.
    pub vertex_ids: Vec<usize>,
    /// Sum of member vertex areas.
    pub extent: f64,
}

impl VertexCluster {
    pub fn len(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertex_ids.is_empty()
    }
}

/// Connected components of the vertices passing `h`, ordered by their
/// smallest member. Vertices without any incident edge never form clusters.
pub fn thresholded_components(
    mesh: &TriangleMesh,
    stat: &[f64],
    h: f64,
    direction: Direction,
) -> Result<Vec<VertexCluster>> {
    if stat.len() != mesh.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "statistic has {} values, mesh has {} vertices",
            stat.len(),
            mesh.vertex_count()
        )));
    }
    if !h.is_finite() {
        return Err(Error::InvalidParameter(format!("threshold {h} is not finite")));
    }
    let mut clusters = Vec::new();
    let mut scanner = ClusterScanner::new(mesh.vertex_count());
    let passes = |v: usize| match direction {
        Direction::Positive => stat[v] >= h,
        Direction::Negative => stat[v] <= h,
    };
    scanner.scan(mesh, 0..mesh.vertex_count(), passes, |members, extent| {
        clusters.push(VertexCluster {
            vertex_ids: members.to_vec(),
            extent,
        });
    });
    Ok(clusters)
}

/// Reusable flood-fill state for repeated thresholding of the same mesh.
#[derive(Debug, Clone)]
pub struct ClusterScanner {
    mark: Vec<u32>,
    epoch: u32,
    stack: Vec<usize>,
    members: Vec<usize>,
}

impl ClusterScanner {
    pub fn new(vertex_count: usize) -> Self {
        ClusterScanner {
            mark: vec![0; vertex_count],
            epoch: 0,
            stack: Vec::new(),
            members: Vec::new(),
        }
    }

    /// Flood-fill every component of the vertices accepted by `passes`,
    /// seeding from `seeds` in order. `visit` receives the ascending member
    /// list and its extent, summed in ascending vertex order.
    pub fn scan<I, P, V>(&mut self, mesh: &TriangleMesh, seeds: I, passes: P, mut visit: V)
    where
        I: IntoIterator<Item = usize>,
        P: Fn(usize) -> bool,
        V: FnMut(&[usize], f64),
    {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.mark.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
        let epoch = self.epoch;
        let area = mesh.vertex_area();
        for seed in seeds {
            if self.mark[seed] == epoch || mesh.degree(seed) == 0 || !passes(seed) {
                continue;
            }
            self.mark[seed] = epoch;
            self.members.clear();
            self.stack.push(seed);
            while let Some(v) = self.stack.pop() {
                self.members.push(v);
                for &w in mesh.neighbors(v) {
                    if self.mark[w] != epoch && passes(w) {
                        self.mark[w] = epoch;
                        self.stack.push(w);
                    }
                }
            }
            self.members.sort_unstable();
            let extent = self.members.iter().map(|&v| area[v]).sum();
            visit(&self.members, extent);
        }
    }
}
