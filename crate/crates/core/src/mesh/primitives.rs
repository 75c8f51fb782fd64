//! Procedural meshes for tests, benchmarks and synthetic experiments.

use std::f64::consts::{FRAC_PI_2, TAU};

use super::TriangleMesh;
use crate::error::{Error, Result};

/// Planar `rows x cols` lattice with spacing `spacing`, each cell split
/// along its rising diagonal. Vertex `(r, c)` has index `r * cols + c`.
pub fn grid(rows: usize, cols: usize, spacing: f64) -> Result<TriangleMesh> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid needs at least 2x2 vertices, got {rows}x{cols}"
        )));
    }
    let mut vertices = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            vertices.push([c as f64 * spacing, r as f64 * spacing, 0.0]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * (rows - 1) * (cols - 1));
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let a = r * cols + c;
            let b = a + 1;
            let d = a + cols;
            let e = d + 1;
            triangles.push([a, b, e]);
            triangles.push([a, e, d]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}

/// Zig-zag triangle strip: vertex `i` neighbours `i ± 1` and `i ± 2`.
pub fn strip(n: usize) -> Result<TriangleMesh> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("strip needs 3 vertices, got {n}")));
    }
    let vertices = (0..n)
        .map(|i| [(i / 2) as f64 + 0.5 * (i % 2) as f64, (i % 2) as f64, 0.0])
        .collect();
    let triangles = (0..n - 2).map(|i| [i, i + 1, i + 2]).collect();
    TriangleMesh::new(vertices, triangles)
}

/// Half ellipsoid open at the base, a rough stand-in for a left ventricle.
/// Vertex 0 is the apex; ring `k` (1-based) holds `segments` vertices.
pub fn cup(rings: usize, segments: usize, radius: f64, depth: f64) -> Result<TriangleMesh> {
    if rings < 1 || segments < 3 {
        return Err(Error::InvalidParameter(format!(
            "cup needs rings >= 1 and segments >= 3, got {rings}, {segments}"
        )));
    }
    let mut vertices = vec![[0.0, 0.0, -depth]];
    for k in 1..=rings {
        let theta = FRAC_PI_2 * k as f64 / rings as f64;
        for j in 0..segments {
            let phi = TAU * j as f64 / segments as f64;
            vertices.push([
                radius * theta.sin() * phi.cos(),
                radius * theta.sin() * phi.sin(),
                -depth * theta.cos(),
            ]);
        }
    }
    let ring = |k: usize, j: usize| 1 + (k - 1) * segments + j % segments;
    let mut triangles = Vec::new();
    for j in 0..segments {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for k in 1..rings {
        for j in 0..segments {
            let (a, b) = (ring(k, j), ring(k, j + 1));
            let (c, d) = (ring(k + 1, j), ring(k + 1, j + 1));
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}
