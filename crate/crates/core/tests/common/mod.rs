//! Reference implementations written straight from the definitions, with no
//! shared code beyond the mesh and threshold grid.

#![allow(dead_code)]

use meshspm::mesh::TriangleMesh;
use meshspm::tfce::{threshold_grid, TfceParams};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Members (ascending) of the connected set of vertices with `side >= h`
/// containing `p`, found by breadth-first search from `p` alone.
pub fn cluster_of(mesh: &TriangleMesh, side: &[f64], h: f64, p: usize) -> Vec<usize> {
    if side[p] < h || mesh.degree(p) == 0 {
        return Vec::new();
    }
    let mut seen = vec![false; side.len()];
    let mut queue = std::collections::VecDeque::from([p]);
    seen[p] = true;
    let mut members = Vec::new();
    while let Some(v) = queue.pop_front() {
        members.push(v);
        for &w in mesh.neighbors(v) {
            if !seen[w] && side[w] >= h {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    members.sort_unstable();
    members
}

fn naive_side(mesh: &TriangleMesh, side: &[f64], params: &TfceParams) -> Vec<f64> {
    let n = side.len();
    let mut out = vec![0.0; n];
    let max = side.iter().copied().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return out;
    }
    let (grid, dh) = threshold_grid(max, params.num_steps);
    for p in 0..n {
        if side[p] <= 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for &h in &grid {
            let members = cluster_of(mesh, side, h, p);
            if members.is_empty() || members.len() < params.min_cluster_vertices {
                continue;
            }
            let mut extent = 0.0;
            for &m in &members {
                extent += mesh.vertex_area()[m];
            }
            acc += extent.powf(params.e) * h.powf(params.h) * dh;
        }
        out[p] = acc;
    }
    out
}

/// Per-vertex discrete TFCE sum, one cluster search per vertex and
/// threshold.
pub fn naive_tfce(mesh: &TriangleMesh, t: &[f64], params: &TfceParams) -> Vec<f64> {
    let pos = naive_side(mesh, t, params);
    let neg: Vec<f64> = t.iter().map(|x| -x).collect();
    let neg = naive_side(mesh, &neg, params);
    t.iter()
        .enumerate()
        .map(|(v, &x)| if x < 0.0 { -neg[v] } else { pos[v] })
        .collect()
}

/// `(X'X)^-1` by LU inversion.
pub fn gram_inverse(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x.transpose() * x).try_inverse().expect("invertible Gram matrix")
}

pub struct OracleFit {
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub se: DVector<f64>,
    pub hc4m_se: DVector<f64>,
}

/// Normal-equation OLS with classical and HC4m standard errors.
pub fn oracle_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> OracleFit {
    let (n, p) = x.shape();
    let g = gram_inverse(x);
    let beta = &g * x.transpose() * y;
    let residuals = y - x * &beta;
    let sigma2 = residuals.norm_squared() / (n - p) as f64;
    let se = DVector::from_fn(p, |j, _| (sigma2 * g[(j, j)]).sqrt());
    let hat = x * &g * x.transpose();
    let omega = DMatrix::from_fn(n, n, |i, j| {
        if i != j {
            return 0.0;
        }
        let h = hat[(i, i)];
        let r = n as f64 * h / p as f64;
        let delta = r.min(1.0) + r.min(1.5);
        residuals[i].powi(2) / (1.0 - h).powf(delta)
    });
    let cov = &g * x.transpose() * omega * x * &g;
    let hc4m_se = DVector::from_fn(p, |j, _| cov[(j, j)].sqrt());
    OracleFit {
        beta,
        residuals,
        se,
        hc4m_se,
    }
}

/// `I - Z (Z'Z)^-1 Z'` by explicit inversion.
pub fn residual_former(z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.nrows();
    DMatrix::identity(n, n) - z * gram_inverse(z) * z.transpose()
}

/// Mean zero, unit sample standard deviation.
pub fn zscore(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    v.iter().map(|x| (x - mean) / sd).collect()
}

/// BH adjusted p-values from the definition
/// `min over j with p_(j) >= p_i of min(1, m p_(j) / j)`.
pub fn bh_definition(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    p.iter()
        .map(|&pi| {
            let mut best: f64 = 1.0;
            for (j, &pj) in sorted.iter().enumerate() {
                if pj >= pi {
                    best = best.min(pj * m as f64 / (j + 1) as f64);
                }
            }
            best.min(1.0)
        })
        .collect()
}

/// BH rejections: all p at or below the largest `p_(k) <= k q / m`.
pub fn bh_mask_definition(p: &[f64], q: f64) -> Vec<bool> {
    let m = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted
        .iter()
        .enumerate()
        .filter(|&(k, &pk)| pk <= (k + 1) as f64 * q / m as f64)
        .map(|(_, &pk)| pk)
        .last();
    match cut {
        Some(c) => p.iter().map(|&pi| pi <= c).collect(),
        None => vec![false; m],
    }
}

/// Random triangle soup over `n` jittered points; some vertices may end up
/// without triangles.
pub fn random_mesh(rng: &mut ChaCha8Rng, n: usize, triangles: usize) -> TriangleMesh {
    let vertices: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let mut tris = Vec::with_capacity(triangles);
    while tris.len() < triangles {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let c = rng.random_range(0..n);
        if a != b && b != c && a != c {
            tris.push([a, b, c]);
        }
    }
    TriangleMesh::new(vertices, tris).expect("random mesh")
}

/// Jittered grid with a random fraction of triangles dropped: planar-ish,
/// locally connected, with occasional holes.
pub fn random_surface(rng: &mut ChaCha8Rng, rows: usize, cols: usize, drop: f64) -> TriangleMesh {
    let vertices: Vec<[f64; 3]> = (0..rows * cols)
        .map(|i| {
            let (r, c) = ((i / cols) as f64, (i % cols) as f64);
            [
                c + 0.3 * (rng.random::<f64>() - 0.5),
                r + 0.3 * (rng.random::<f64>() - 0.5),
                0.5 * rng.random::<f64>(),
            ]
        })
        .collect();
    let mut tris = Vec::new();
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let v = r * cols + c;
            for t in [[v, v + 1, v + cols + 1], [v, v + cols + 1, v + cols]] {
                if rng.random::<f64>() >= drop {
                    tris.push(t);
                }
            }
        }
    }
    if tris.is_empty() {
        tris.push([0, 1, cols + 1]);
    }
    TriangleMesh::new(vertices, tris).expect("random surface")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Write `mesh.ply`, `design.csv` and `phenotype.csv` under `dir` and return
/// a config pointing at them, with output to `dir/out`.
pub fn write_dataset(
    dir: &std::path::Path,
    mesh: &TriangleMesh,
    columns: &[(&str, &[f64])],
    y: &DMatrix<f64>,
) -> meshspm::io::RunConfig {
    use std::fmt::Write;
    let mut ply = Vec::new();
    meshspm::mesh::ply::write_ply(&mut ply, mesh, &[]).unwrap();
    std::fs::write(dir.join("mesh.ply"), ply).unwrap();
    let n = y.nrows();
    let mut design = String::from("subject_id");
    for (name, _) in columns {
        write!(design, ",{name}").unwrap();
    }
    design.push('\n');
    for s in 0..n {
        write!(design, "s{s:03}").unwrap();
        for (_, values) in columns {
            write!(design, ",{}", values[s]).unwrap();
        }
        design.push('\n');
    }
    std::fs::write(dir.join("design.csv"), design).unwrap();
    let mut ph = String::from("subject_id");
    for v in 0..y.ncols() {
        write!(ph, ",v{v}").unwrap();
    }
    ph.push('\n');
    for s in 0..n {
        write!(ph, "s{s:03}").unwrap();
        for v in 0..y.ncols() {
            write!(ph, ",{}", y[(s, v)]).unwrap();
        }
        ph.push('\n');
    }
    std::fs::write(dir.join("phenotype.csv"), ph).unwrap();
    let mut config = meshspm::io::RunConfig::default();
    config.input.mesh = Some(dir.join("mesh.ply"));
    config.input.design = Some(dir.join("design.csv"));
    config.input.phenotype = Some(dir.join("phenotype.csv"));
    config.run.out = Some(dir.join("out"));
    config
}

/// SHA-256 of every file under `dir`, keyed by relative path.
pub fn tree_digest(dir: &std::path::Path) -> std::collections::BTreeMap<String, String> {
    let mut out = std::collections::BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if path.is_dir() {
            for (k, v) in tree_digest(&path) {
                out.insert(format!("{name}/{k}"), v);
            }
        } else {
            out.insert(name, meshspm::io::digest_bytes(&std::fs::read(&path).unwrap()));
        }
    }
    out
}
