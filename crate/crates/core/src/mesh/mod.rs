//! Triangle meshes with per-vertex areas and edge adjacency.
//!
//! A [`TriangleMesh`] is immutable once built. Vertex areas use the
//! barycentric convention: every triangle hands one third of its area to
//! each of its corners, so the per-vertex areas partition the surface area
//! exactly. Adjacency is edge based and stored in compressed row form.

mod components;
pub mod ply;
pub mod primitives;
pub mod text;

pub use components::{thresholded_components, ClusterScanner, Direction, VertexCluster};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    vertex_area: Vec<f64>,
    offsets: Vec<usize>,
    adjacency: Vec<usize>,
}

impl TriangleMesh {
    /// Build a mesh, validating indices and geometry and deriving areas and
    /// adjacency.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        check_indices(vertices.len(), &triangles)?;
        let vertex_area = compute_vertex_areas(&vertices, &triangles)?;
        let (offsets, adjacency) = adjacency_csr(vertices.len(), &triangles);
        Ok(TriangleMesh {
            vertices,
            triangles,
            vertex_area,
            offsets,
            adjacency,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn vertex_area(&self) -> &[f64] {
        &self.vertex_area
    }

    /// Neighbours of vertex `i`, sorted ascending.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        (0..self.vertex_count()).map(|i| self.neighbors(i).to_vec()).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| triangle_area(&self.vertices[t[0]], &self.vertices[t[1]], &self.vertices[t[2]]))
            .sum()
    }

    /// Sum of the vertex areas of the flagged vertices.
    pub fn masked_area(&self, mask: &[bool]) -> f64 {
        mask.iter()
            .zip(&self.vertex_area)
            .filter(|(m, _)| **m)
            .map(|(_, a)| a)
            .sum()
    }

    /// Breadth-first hop distance from the nearest source vertex. Unreachable
    /// vertices get `usize::MAX`.
    pub fn graph_distance(&self, sources: &[bool]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.vertex_count()];
        let mut queue = std::collections::VecDeque::new();
        for (i, &s) in sources.iter().enumerate() {
            if s {
                dist[i] = 0;
                queue.push_back(i);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &w in self.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }
}

fn check_indices(n: usize, triangles: &[[usize; 3]]) -> Result<()> {
    for (t, tri) in triangles.iter().enumerate() {
        for &index in tri {
            if index >= n {
                return Err(Error::IndexOutOfRange {
                    triangle: t,
                    index,
                    vertices: n,
                });
            }
        }
    }
    Ok(())
}

pub fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    0.5 * (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt()
}

/// One third of the area of every incident triangle, per vertex.
pub fn compute_vertex_areas(vertices: &[Point], triangles: &[[usize; 3]]) -> Result<Vec<f64>> {
    if triangles.is_empty() {
        return Err(Error::NoTriangles);
    }
    check_indices(vertices.len(), triangles)?;
    let mut area = vec![0.0; vertices.len()];
    for tri in triangles {
        let [a, b, c] = tri.map(|i| &vertices[i]);
        if a.iter().chain(b).chain(c).any(|x| !x.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "non-finite coordinate in triangle {tri:?}"
            )));
        }
        let third = triangle_area(a, b, c) / 3.0;
        for &i in tri {
            area[i] += third;
        }
    }
    Ok(area)
}

/// Neighbour lists from shared triangle edges: symmetric, sorted, no
/// duplicates, no self loops.
pub fn build_adjacency(vertex_count: usize, triangles: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let (offsets, adjacency) = adjacency_csr(vertex_count, triangles);
    (0..vertex_count)
        .map(|i| adjacency[offsets[i]..offsets[i + 1]].to_vec())
        .collect()
}

fn adjacency_csr(vertex_count: usize, triangles: &[[usize; 3]]) -> (Vec<usize>, Vec<usize>) {
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(triangles.len() * 6);
    for &[a, b, c] in triangles {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            if u != v && u < vertex_count && v < vertex_count {
                edges.push((u, v));
                edges.push((v, u));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let mut offsets = vec![0usize; vertex_count + 1];
    for &(u, _) in &edges {
        offsets[u + 1] += 1;
    }
    for i in 0..vertex_count {
        offsets[i + 1] += offsets[i];
    }
    let adjacency = edges.into_iter().map(|(_, v)| v).collect();
    (offsets, adjacency)
}
