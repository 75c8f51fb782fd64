//! End-to-end commands: load inputs, run an analysis, write an output
//! directory with a manifest.
//!
//! Outputs are written to a sibling staging directory and moved into place
//! only when the command succeeds, so a failed run leaves nothing behind.
//! An existing output directory is replaced only if it is empty or holds a
//! previous run's manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::glm::diagnostics::diagnostics;
use crate::glm::{mass_univariate, DesignMatrix, FitFlag, FitResult, PhenotypeMatrix};
use crate::inference::{
    cluster_extent_from_outcome, freedman_lane, pooled_fdr, run_permutations, with_workers, Correction,
    InferenceResult, Statistic,
};
use crate::io::{
    align_subjects, digest_file, read_beta_map, read_mesh, write_csv, FileDigest, Mode, RunConfig, RunManifest,
    SubjectTable,
};
use crate::mesh::{ply::write_ply, Direction, TriangleMesh};
use crate::synth::{patch_beta_map, sweep, SweepRow};

const MANIFEST: &str = "manifest.json";

struct Staging {
    dir: PathBuf,
    out: PathBuf,
    committed: bool,
}

impl Staging {
    fn new(out: &Path) -> Result<Self> {
        check_replaceable(out)?;
        let name = out
            .file_name()
            .ok_or_else(|| Error::Validation(format!("output path '{}' has no final component", out.display())))?;
        let mut staged = name.to_os_string();
        staged.push(".partial");
        let dir = out.with_file_name(staged);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        Ok(Staging {
            dir,
            out: out.to_path_buf(),
            committed: false,
        })
    }

    fn write(&self, name: &str, data: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), data)?;
        Ok(())
    }

    fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let mut buf = Vec::new();
        write_csv(&mut buf, rows)?;
        self.write(name, &buf)
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn commit(mut self, mut manifest: RunManifest) -> Result<()> {
        let mut names: Vec<String> = fs::read_dir(&self.dir)?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<std::io::Result<_>>()?;
        names.sort();
        manifest.outputs = names
            .iter()
            .map(|n| {
                let mut d = digest_file(&self.dir.join(n))?;
                d.path = n.clone();
                Ok(d)
            })
            .collect::<Result<_>>()?;
        self.write(MANIFEST, manifest.to_json().as_bytes())?;
        check_replaceable(&self.out)?;
        if self.out.exists() {
            fs::remove_dir_all(&self.out)?;
        }
        fs::rename(&self.dir, &self.out)?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

fn check_replaceable(out: &Path) -> Result<()> {
    if !out.exists() {
        return Ok(());
    }
    let empty = out.is_dir() && fs::read_dir(out)?.next().is_none();
    if empty || out.join(MANIFEST).is_file() {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "output '{}' exists and is not a previous run directory",
            out.display()
        )))
    }
}

/// Stage timings, reported on stderr and optionally kept in the manifest.
struct Clock {
    last: Instant,
    stages: BTreeMap<String, f64>,
}

impl Clock {
    fn new() -> Self {
        Clock {
            last: Instant::now(),
            stages: BTreeMap::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let secs = self.last.elapsed().as_secs_f64();
        eprintln!("[meshspm] {stage}: {secs:.3} s");
        self.stages.insert(stage.to_string(), secs);
        self.last = Instant::now();
    }

    fn finish(self, config: &RunConfig, manifest: &mut RunManifest) {
        if config.run.record_timings {
            manifest.timings = Some(self.stages);
        }
    }
}

fn output_dir(config: &RunConfig) -> Result<PathBuf> {
    config
        .run
        .out
        .clone()
        .ok_or_else(|| Error::Validation("no output directory given".into()))
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Validation(format!("no {what} file given")))
}

fn input_digests(config: &RunConfig) -> Result<Vec<FileDigest>> {
    let i = &config.input;
    [&i.mesh, &i.vertices, &i.faces, &i.design, &i.phenotype, &i.beta_map]
        .into_iter()
        .flatten()
        .map(|p| digest_file(p))
        .collect()
}

/// File-name-safe version of a column name.
fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct Inputs {
    mesh: TriangleMesh,
    design: DesignMatrix,
    phenotype: PhenotypeMatrix,
}

fn load_inputs(config: &RunConfig) -> Result<Inputs> {
    let mesh = read_mesh(&config.input)?;
    let table = SubjectTable::read(required(&config.input.design, "design")?)?;
    let design = table.design(&config.model.interest, &config.model.nuisance)?;
    let phenotype = SubjectTable::read(required(&config.input.phenotype, "phenotype")?)?.phenotype()?;
    let phenotype = align_subjects(&table.subject_ids, &phenotype)?;
    if phenotype.vertices() != mesh.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "phenotype has {} vertex columns, mesh has {} vertices",
            phenotype.vertices(),
            mesh.vertex_count()
        )));
    }
    Ok(Inputs {
        mesh,
        design,
        phenotype,
    })
}

#[derive(Debug, Serialize)]
struct FitRow {
    vertex_id: usize,
    beta: f64,
    se: f64,
    t: f64,
    flag: &'static str,
}

fn fit_rows(fit: &FitResult) -> Vec<FitRow> {
    (0..fit.beta.len())
        .map(|v| FitRow {
            vertex_id: v,
            beta: fit.beta[v],
            se: fit.se[v],
            t: fit.tstat[v],
            flag: fit.flags[v].as_str(),
        })
        .collect()
}

/// Per-column fits plus design diagnostics.
pub fn cmd_fit(config: &RunConfig) -> Result<PathBuf> {
    config.validate()?;
    let out = output_dir(config)?;
    let staging = Staging::new(&out)?;
    let mut clock = Clock::new();
    let inputs = load_inputs(config)?;
    clock.lap("load");
    let options = config.model.options();
    with_workers(config.permutation.workers, || -> Result<()> {
        for &column in inputs.design.interest_columns() {
            let (design, contrast) = inputs.design.single_interest(column)?;
            let fit = mass_univariate(&design, &inputs.phenotype, contrast, &options)?;
            let name = &inputs.design.column_names()[column];
            staging.csv(&format!("fit_{}.csv", slug(name)), &fit_rows(&fit))?;
        }
        Ok(())
    })??;
    clock.lap("fit");
    let report = diagnostics(&inputs.design, Some(&inputs.phenotype))?;
    staging.json("diagnostics.json", &report)?;
    clock.lap("diagnostics");
    let mut manifest = RunManifest::new("fit", config);
    manifest.inputs = input_digests(config)?;
    clock.finish(config, &mut manifest);
    staging.commit(manifest)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub column: String,
    pub mode: Mode,
    /// Cluster-forming threshold, in cluster-extent mode.
    pub threshold: Option<f64>,
    pub significant_vertices: usize,
    /// Fraction of the mesh area inside the significance mask.
    pub significant_area: f64,
    pub fwer_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferSummary {
    pub models: Vec<ModelReport>,
}

#[derive(Debug, Serialize)]
struct ResultRow {
    vertex_id: usize,
    beta: f64,
    se: f64,
    t: f64,
    tfce: Option<f64>,
    p_raw: f64,
    p_adjusted: f64,
    significant: u8,
}

#[derive(Debug, Serialize)]
struct ClusterRow {
    threshold: f64,
    cluster: usize,
    direction: &'static str,
    vertices: usize,
    extent: f64,
    p: f64,
    significant: u8,
}

fn area_fraction(mesh: &TriangleMesh, mask: &[bool]) -> f64 {
    mesh.masked_area(mask) / mesh.total_area()
}

fn write_inference(staging: &Staging, mesh: &TriangleMesh, name: &str, r: &InferenceResult) -> Result<()> {
    let tfce = r.plan.tfce.is_some();
    let rows: Vec<ResultRow> = (0..r.p_raw.len())
        .map(|v| ResultRow {
            vertex_id: v,
            beta: r.fit.beta[v],
            se: r.fit.se[v],
            t: r.fit.tstat[v],
            tfce: tfce.then(|| r.observed[v]),
            p_raw: r.p_raw[v],
            p_adjusted: r.p_adjusted[v],
            significant: r.mask[v] as u8,
        })
        .collect();
    staging.csv(&format!("result_{name}.csv"), &rows)?;
    let mask: Vec<f64> = r.mask.iter().map(|&m| f64::from(m as u8)).collect();
    let mut props: Vec<(&str, &[f64])> = vec![("t", &r.fit.tstat), ("beta", &r.fit.beta)];
    if tfce {
        props.push(("tfce", &r.observed));
    }
    props.push(("p_adjusted", &r.p_adjusted));
    props.push(("significant", &mask));
    let mut ply = Vec::new();
    write_ply(&mut ply, mesh, &props)?;
    staging.write(&format!("overlay_{name}.ply"), &ply)?;
    let mut buf = Vec::new();
    write_csv(
        &mut buf,
        &r.mask
            .iter()
            .enumerate()
            .map(|(v, &m)| (v, m as u8))
            .collect::<Vec<_>>(),
    )?;
    staging.write(
        &format!("mask_{name}.csv"),
        &prefix_header("vertex_id,significant", &buf),
    )
}

/// Tuples serialise without a header; add one.
fn prefix_header(header: &str, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(header.len() + 1 + body.len());
    out.extend_from_slice(header.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(body);
    out
}

/// Fit, TFCE (or plain `|t|`, or cluster extent), Freedman-Lane permutation
/// inference and multiple-testing correction for every interest column.
pub fn cmd_infer(config: &RunConfig) -> Result<(PathBuf, InferSummary)> {
    config.validate()?;
    if config.correction.pooled && config.correction.method != Correction::Bh {
        return Err(Error::Validation("pooled correction is only defined for bh".into()));
    }
    let out = output_dir(config)?;
    let staging = Staging::new(&out)?;
    let mut clock = Clock::new();
    let inputs = load_inputs(config)?;
    clock.lap("load");
    let plan = config.plan();
    let mut models = Vec::new();
    let columns = inputs.design.interest_columns().to_vec();
    let names: Vec<String> = columns
        .iter()
        .map(|&c| slug(&inputs.design.column_names()[c]))
        .collect();
    if config.run.mode == Mode::ClusterExtent {
        let statistics: Vec<Statistic> = config
            .run
            .cluster_extent_thresholds
            .iter()
            .map(|&threshold| Statistic::ClusterExtent { threshold })
            .collect();
        for (&column, name) in columns.iter().zip(&names) {
            let (design, contrast) = inputs.design.single_interest(column)?;
            let run = run_permutations(&design, contrast, &inputs.phenotype, &inputs.mesh, &plan, &statistics)?;
            let mut cluster_rows = Vec::new();
            let mut mask_header = String::from("vertex_id");
            let mut masks = Vec::new();
            for (&h, outcome) in config.run.cluster_extent_thresholds.iter().zip(&run.outcomes) {
                let r = cluster_extent_from_outcome(&inputs.mesh, &run.fit.tstat, h, outcome)?;
                for (i, c) in r.clusters.iter().enumerate() {
                    cluster_rows.push(ClusterRow {
                        threshold: h,
                        cluster: i,
                        direction: match c.cluster.direction {
                            Direction::Positive => "positive",
                            Direction::Negative => "negative",
                        },
                        vertices: c.cluster.cluster.len(),
                        extent: c.cluster.cluster.extent,
                        p: c.p,
                        significant: c.significant as u8,
                    });
                }
                mask_header.push_str(&format!(",significant_h{h}"));
                models.push(ModelReport {
                    column: inputs.design.column_names()[column].clone(),
                    mode: Mode::ClusterExtent,
                    threshold: Some(h),
                    significant_vertices: r.mask.iter().filter(|&&m| m).count(),
                    significant_area: area_fraction(&inputs.mesh, &r.mask),
                    fwer_threshold: Some(r.extent_threshold),
                });
                masks.push(r.mask);
            }
            staging.csv(&format!("fit_{name}.csv"), &fit_rows(&run.fit))?;
            staging.csv(&format!("clusters_{name}.csv"), &cluster_rows)?;
            let mut body = String::new();
            for v in 0..inputs.mesh.vertex_count() {
                body.push_str(&v.to_string());
                for m in &masks {
                    body.push_str(if m[v] { ",1" } else { ",0" });
                }
                body.push('\n');
            }
            staging.write(
                &format!("mask_{name}.csv"),
                &prefix_header(&mask_header, body.as_bytes()),
            )?;
        }
        clock.lap("cluster_extent");
    } else {
        let mut results = Vec::new();
        for &column in &columns {
            let (design, contrast) = inputs.design.single_interest(column)?;
            results.push(freedman_lane(
                &design,
                contrast,
                &inputs.phenotype,
                &inputs.mesh,
                &plan,
                config.correction.spec(),
            )?);
        }
        clock.lap("permutation");
        if config.correction.pooled {
            let p: Vec<Vec<f64>> = results.iter().map(|r| r.p_raw.clone()).collect();
            for (r, adj) in results.iter_mut().zip(pooled_fdr(&p, config.correction.q)?) {
                r.p_adjusted = adj.adjusted;
                r.mask = adj.mask;
            }
        }
        for ((r, name), &column) in results.iter().zip(&names).zip(&columns) {
            write_inference(&staging, &inputs.mesh, name, r)?;
            models.push(ModelReport {
                column: inputs.design.column_names()[column].clone(),
                mode: config.run.mode,
                threshold: None,
                significant_vertices: r.mask.iter().filter(|&&m| m).count(),
                significant_area: area_fraction(&inputs.mesh, &r.mask),
                fwer_threshold: r.fwer_threshold,
            });
        }
        clock.lap("write");
    }
    let summary = InferSummary { models };
    staging.json("summary.json", &summary)?;
    let mut manifest = RunManifest::new("infer", config);
    manifest.inputs = input_digests(config)?;
    clock.finish(config, &mut manifest);
    staging.commit(manifest)?;
    Ok((out, summary))
}

#[derive(Debug, Serialize)]
struct LongRow<'a> {
    n: usize,
    intensity: f64,
    variant: &'a str,
    metric: &'static str,
    value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub cells: usize,
    /// Highest mean sensitivity, first in grid order on ties.
    pub best: Option<SweepRow>,
    pub rows: Vec<SweepRow>,
}

/// Synthetic power/FDR sweep over the configured grid.
pub fn cmd_sweep(config: &RunConfig) -> Result<(PathBuf, SweepSummary)> {
    config.validate()?;
    let out = output_dir(config)?;
    let staging = Staging::new(&out)?;
    let mut clock = Clock::new();
    let mesh = read_mesh(&config.input)?;
    let beta = match &config.input.beta_map {
        Some(path) => read_beta_map(path)?,
        None => {
            let s = &config.sweep.signal;
            patch_beta_map(&mesh, s.coverage, &s.centers, s.sign, s.floor)?
        }
    };
    clock.lap("load");
    let rows = sweep(&mesh, &beta, &config.sweep_config())?;
    clock.lap("sweep");
    staging.csv("sweep.csv", &rows)?;
    let long: Vec<LongRow> = rows
        .iter()
        .flat_map(|r| {
            r.metrics().into_iter().map(move |(metric, value)| LongRow {
                n: r.n,
                intensity: r.intensity,
                variant: &r.variant,
                metric,
                value,
            })
        })
        .collect();
    staging.csv("sweep_long.csv", &long)?;
    let beta_rows: Vec<(usize, f64)> = beta.iter().copied().enumerate().collect();
    let mut buf = Vec::new();
    write_csv(&mut buf, &beta_rows)?;
    staging.write("beta_map.csv", &prefix_header("vertex_id,beta", &buf))?;
    let best = rows
        .iter()
        .fold(None::<&SweepRow>, |best, r| match best {
            Some(b) if b.sensitivity >= r.sensitivity => Some(b),
            _ => Some(r),
        })
        .cloned();
    let summary = SweepSummary {
        cells: rows.len(),
        best,
        rows,
    };
    staging.json("summary.json", &summary)?;
    let mut manifest = RunManifest::new("sweep", config);
    manifest.inputs = input_digests(config)?;
    clock.finish(config, &mut manifest);
    staging.commit(manifest)?;
    Ok((out, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalRow {
    pub name: String,
    pub beta: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
    pub n: usize,
}

/// One regression of a per-subject scalar phenotype on each interest
/// column, with the nuisance columns as covariates.
pub fn global_regression(config: &RunConfig) -> Result<Vec<GlobalRow>> {
    let table = SubjectTable::read(required(&config.input.design, "design")?)?;
    let response = config
        .model
        .response
        .as_deref()
        .ok_or_else(|| Error::Validation("no response column given".into()))?;
    let y = table
        .column(response)
        .ok_or_else(|| Error::Validation(format!("design has no column '{response}'")))?;
    let design = table.design(&config.model.interest, &config.model.nuisance)?;
    let y = PhenotypeMatrix::new(
        nalgebra::DMatrix::from_column_slice(y.len(), 1, y),
        table.subject_ids.clone(),
    )?;
    let options = config.model.options();
    design
        .interest_columns()
        .iter()
        .map(|&column| {
            let (d, contrast) = design.single_interest(column)?;
            let fit = mass_univariate(&d, &y, contrast, &options)?;
            let n = d.subjects();
            let df = (n - d.values().ncols()) as f64;
            let (beta, se) = (fit.beta[0], fit.se[0]);
            let t = match fit.flags[0] {
                FitFlag::Ok => fit.tstat[0],
                // exact fit: any non-zero slope is infinitely significant
                FitFlag::DegenerateResidual if beta != 0.0 => beta.signum() * f64::INFINITY,
                _ => 0.0,
            };
            let p = if t.is_infinite() {
                0.0
            } else {
                let dist = StudentsT::new(0.0, 1.0, df)
                    .map_err(|e| Error::InvalidParameter(format!("t distribution: {e}")))?;
                2.0 * dist.sf(t.abs())
            };
            Ok(GlobalRow {
                name: design.column_names()[column].clone(),
                beta,
                se,
                t,
                p,
                n,
            })
        })
        .collect()
}

pub fn cmd_global(config: &RunConfig) -> Result<(PathBuf, Vec<GlobalRow>)> {
    config.validate()?;
    let out = output_dir(config)?;
    let staging = Staging::new(&out)?;
    let rows = global_regression(config)?;
    staging.csv("global.csv", &rows)?;
    let mut manifest = RunManifest::new("global", config);
    manifest.inputs = input_digests(config)?;
    staging.commit(manifest)?;
    Ok((out, rows))
}

/// Design diagnostics, with per-vertex heteroscedasticity tests when a
/// phenotype is given.
pub fn cmd_diagnose(config: &RunConfig) -> Result<PathBuf> {
    config.validate()?;
    let out = output_dir(config)?;
    let staging = Staging::new(&out)?;
    let table = SubjectTable::read(required(&config.input.design, "design")?)?;
    let design = table.design(&config.model.interest, &config.model.nuisance)?;
    let phenotype = match &config.input.phenotype {
        Some(p) => Some(align_subjects(
            &table.subject_ids,
            &SubjectTable::read(p)?.phenotype()?,
        )?),
        None => None,
    };
    let report = diagnostics(&design, phenotype.as_ref())?;
    staging.json("diagnostics.json", &report)?;
    let mut manifest = RunManifest::new("diagnose", config);
    manifest.inputs = input_digests(config)?;
    staging.commit(manifest)?;
    Ok(out)
}
