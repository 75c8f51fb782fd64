mod common;

use common::{oracle_fit, rng, tree_digest, write_dataset};
use meshspm::io::{Mode, RunManifest};
use meshspm::mesh::primitives;
use meshspm::pipeline::{cmd_diagnose, cmd_fit, cmd_global, cmd_infer, cmd_sweep};
use meshspm::synth::Variant;
use meshspm::Error;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn read_csv(path: &std::path::Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn fit_on_toy_mesh_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mesh =
        meshspm::mesh::TriangleMesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]])
            .unwrap();
    let x = [0.0, 1.0, 2.0, 1.5, 0.5, 2.0];
    let age = [40.0, 52.0, 61.0, 45.0, 58.0, 49.0];
    let y = DMatrix::from_fn(6, 3, |s, v| {
        (v + 1) as f64 * x[s] + 0.01 * age[s] + [0.3, -0.2, 0.1, 0.4, -0.5, 0.0][s]
    });
    let mut config = write_dataset(dir.path(), &mesh, &[("x", &x), ("age", &age)], &y);
    config.model.interest = vec!["x".into()];
    config.model.nuisance = vec!["age".into()];
    config.model.standardize = false;
    let out = cmd_fit(&config).unwrap();
    let rows = read_csv(&out.join("fit_x.csv"));
    let xm = DMatrix::from_fn(6, 3, |s, j| [x[s], age[s], 1.0][j]);
    for (v, row) in rows.iter().enumerate() {
        let o = oracle_fit(&xm, &DVector::from_fn(6, |s, _| y[(s, v)]));
        let beta: f64 = row[1].parse().unwrap();
        let se: f64 = row[2].parse().unwrap();
        assert!((beta - o.beta[0]).abs() < 1e-10 * o.beta[0].abs());
        assert!((se - o.se[0]).abs() < 1e-10 * o.se[0]);
        assert_eq!(row[4], "ok");
    }
    assert!(out.join("diagnostics.json").exists());
    let manifest = RunManifest::parse(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.inputs.len(), 3);
    assert_eq!(
        manifest.outputs.iter().map(|o| o.path.as_str()).collect::<Vec<_>>(),
        ["diagnostics.json", "fit_x.csv"]
    );
    assert!(manifest.timings.is_none());
}

fn small_study(dir: &std::path::Path, signal: f64) -> meshspm::io::RunConfig {
    let mesh = primitives::grid(8, 8, 1.0).unwrap();
    let mut r = rng(5);
    let n = 40;
    let x: Vec<f64> = (0..n).map(|_| r.random_range(0.0..2.0)).collect();
    let age: Vec<f64> = (0..n).map(|_| r.random_range(40.0..70.0)).collect();
    let y = DMatrix::from_fn(n, 64, |s, v| {
        let patch = if v % 8 < 4 && v / 8 < 4 { signal } else { 0.0 };
        patch * x[s] + 0.02 * age[s] + r.random_range(-1.0..1.0)
    });
    let mut config = write_dataset(dir, &mesh, &[("x", &x), ("age", &age)], &y);
    config.model.interest = vec!["x".into()];
    config.model.nuisance = vec!["age".into()];
    config.permutation.count = 99;
    config.permutation.seed = 4;
    config
}

#[test]
fn missing_column_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_study(dir.path(), 0.0);
    config.model.interest = vec!["bmi".into()];
    let err = cmd_fit(&config).unwrap_err();
    assert!(matches!(err, Error::Validation(_)));
    assert_eq!(err.exit_code(), 2);
    let left: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(left.len(), 3, "{left:?}");
}

#[test]
fn refuses_to_clobber_foreign_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_study(dir.path(), 0.0);
    let out = config.run.out.clone().unwrap();
    std::fs::create_dir(&out).unwrap();
    std::fs::write(out.join("notes.txt"), "mine").unwrap();
    assert!(cmd_fit(&config).is_err());
    assert_eq!(std::fs::read_to_string(out.join("notes.txt")).unwrap(), "mine");
}

#[test]
fn infer_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_study(dir.path(), 0.8);
    let mut digests = Vec::new();
    for run in 0..3 {
        config.run.out = Some(dir.path().join(format!("out{run}")));
        let (out, summary) = cmd_infer(&config).unwrap();
        assert!(summary.models[0].significant_vertices > 0);
        digests.push(tree_digest(&out));
    }
    assert_eq!(digests[0], digests[1]);
    assert_eq!(digests[1], digests[2]);
    assert!(digests[0].contains_key("overlay_x.ply"));
    assert!(digests[0].contains_key("mask_x.csv"));
    // rerunning into an existing output directory replaces it
    cmd_infer(&config).unwrap();
    assert_eq!(tree_digest(config.run.out.as_ref().unwrap()), digests[0]);
}

#[test]
fn infer_modes_and_pooling() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_study(dir.path(), 0.8);
    config.run.mode = Mode::Mur;
    let (out, mur) = cmd_infer(&config).unwrap();
    let rows = read_csv(&out.join("result_x.csv"));
    assert_eq!(rows.len(), 64);
    assert_eq!(rows[0][4], "", "no tfce column in plain mode");

    config.run.mode = Mode::ClusterExtent;
    config.run.cluster_extent_thresholds = vec![1.5, 2.5];
    let (out, ce) = cmd_infer(&config).unwrap();
    assert_eq!(ce.models.len(), 2);
    assert!(out.join("clusters_x.csv").exists());
    assert_eq!(read_csv(&out.join("mask_x.csv"))[0].len(), 3);

    config.run.mode = Mode::Tfce;
    config.correction.pooled = true;
    let (_, pooled) = cmd_infer(&config).unwrap();
    assert_eq!(pooled.models.len(), 1);
    assert!(mur.models[0].significant_area <= 1.0);

    config.correction.method = meshspm::inference::Correction::Maxstat;
    assert!(cmd_infer(&config).is_err());
}

#[test]
fn significant_area_is_an_area_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_study(dir.path(), 3.0);
    let (_, summary) = cmd_infer(&config).unwrap();
    let m = &summary.models[0];
    assert!(m.significant_area > 0.1 && m.significant_area < 0.6, "{m:?}");
}

#[test]
fn global_regression_noiseless_and_table_shaped() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = primitives::grid(2, 2, 1.0).unwrap();
    let mut r = rng(8);
    let n = 30;
    let snps: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..n).map(|_| r.random_range(0.0..2.0)).collect())
        .collect();
    let lvm: Vec<f64> = snps[0].iter().map(|x| 3.0 + 2.0 * x).collect();
    let mut cols: Vec<(String, &[f64])> = snps
        .iter()
        .enumerate()
        .map(|(i, s)| (format!("rs{i}"), &s[..]))
        .collect();
    cols.push(("lvm".into(), &lvm));
    let named: Vec<(&str, &[f64])> = cols.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    let y = DMatrix::from_fn(n, 4, |_, _| r.random::<f64>());
    let mut config = write_dataset(dir.path(), &mesh, &named, &y);
    config.model.interest = (0..6).map(|i| format!("rs{i}")).collect();
    config.model.response = Some("lvm".into());
    config.model.standardize = false;
    let (out, rows) = cmd_global(&config).unwrap();
    assert_eq!(rows.len(), 6);
    assert!((rows[0].beta - 2.0).abs() < 1e-12);
    assert_eq!(rows[0].p, 0.0);
    assert!(rows[1..].iter().all(|r| r.p > 0.0 && r.p <= 1.0));
    let table = read_csv(&out.join("global.csv"));
    assert_eq!(table.len(), 6);
}

#[test]
fn diagnose_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_study(dir.path(), 0.0);
    let out = cmd_diagnose(&config).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    let names: Vec<&str> = report["columns"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["x", "age"]);
}

#[test]
fn sweep_smoke_grid_has_four_rows_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_study(dir.path(), 0.0);
    config.sweep.sizes = vec![20, 30];
    config.sweep.intensities = vec![0.0, 1.0];
    config.sweep.variants = vec![Variant::Tfce { e: 0.5, h: 2.0 }];
    config.sweep.replicates = 1;
    config.sweep.permutations = 19;
    config.sweep.cohort_subjects = 40;
    config.sweep.signal.coverage = 0.25;
    let (out, summary) = cmd_sweep(&config).unwrap();
    assert_eq!(summary.cells, 4);
    assert!(summary.best.is_some());
    let rows = read_csv(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(read_csv(&out.join("sweep_long.csv")).len(), 12);
    // re-run one cell from its provenance fields
    let row = &summary.rows[3];
    config.sweep.sizes = vec![row.n];
    config.sweep.intensities = vec![row.intensity];
    config.permutation.seed = row.seed;
    config.run.out = Some(dir.path().join("cell"));
    let (_, cell) = cmd_sweep(&config).unwrap();
    assert_eq!(cell.rows[0], *row);
}
