//! `meshspm` command-line front end.
//!
//! Settings come from an optional TOML file (`--config`), then from
//! `MESHSPM_*` environment variables, then from flags; later sources win.
//! Results summaries go to stdout as JSON, progress to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meshspm::glm::Estimator;
use meshspm::inference::Correction;
use meshspm::io::{Mode, RunConfig, RunManifest};
use meshspm::pipeline;
use meshspm::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(
    name = "meshspm",
    version,
    about = "Statistical parametric mapping on triangle meshes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-vertex GLM fits and design diagnostics.
    Fit(Settings),
    /// Permutation inference with TFCE, plain t, or cluster extent.
    Infer(Settings),
    /// Synthetic power and false-discovery sweep.
    Sweep(Settings),
    /// Regression of a per-subject scalar phenotype on each predictor.
    Global(Settings),
    /// Design diagnostics only.
    Diagnose(Settings),
    /// Check a run manifest's input digests against the files on disk.
    Verify { manifest: PathBuf },
}

#[derive(Args)]
struct Settings {
    #[arg(long, env = "MESHSPM_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "MESHSPM_MESH")]
    mesh: Option<PathBuf>,
    #[arg(long, env = "MESHSPM_VERTICES", requires = "faces")]
    vertices: Option<PathBuf>,
    #[arg(long, env = "MESHSPM_FACES", requires = "vertices")]
    faces: Option<PathBuf>,
    #[arg(long, env = "MESHSPM_DESIGN")]
    design: Option<PathBuf>,
    #[arg(long, env = "MESHSPM_PHENOTYPE")]
    phenotype: Option<PathBuf>,
    #[arg(long, env = "MESHSPM_BETA_MAP")]
    beta_map: Option<PathBuf>,
    /// Interest columns; repeat or separate with commas.
    #[arg(long, env = "MESHSPM_INTEREST", value_delimiter = ',')]
    interest: Vec<String>,
    #[arg(long, env = "MESHSPM_NUISANCE", value_delimiter = ',')]
    nuisance: Vec<String>,
    /// Scalar phenotype column for `global`.
    #[arg(long, env = "MESHSPM_RESPONSE")]
    response: Option<String>,
    #[arg(long, env = "MESHSPM_ESTIMATOR")]
    estimator: Option<Estimator>,
    /// Fit in original units instead of standardised coefficients.
    #[arg(long)]
    no_standardize: bool,
    #[arg(long, env = "MESHSPM_TFCE_E")]
    tfce_e: Option<f64>,
    #[arg(long, env = "MESHSPM_TFCE_H")]
    tfce_h: Option<f64>,
    #[arg(long, env = "MESHSPM_TFCE_STEPS")]
    tfce_steps: Option<usize>,
    #[arg(long, env = "MESHSPM_MIN_CLUSTER")]
    min_cluster: Option<usize>,
    #[arg(long, env = "MESHSPM_PERMUTATIONS")]
    permutations: Option<usize>,
    #[arg(long, env = "MESHSPM_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "MESHSPM_CORRECTION")]
    correction: Option<Correction>,
    #[arg(long, env = "MESHSPM_Q")]
    q: Option<f64>,
    /// One BH pass over all interest columns.
    #[arg(long)]
    pooled: bool,
    /// tfce, mur, or cluster-extent.
    #[arg(long, env = "MESHSPM_MODE")]
    mode: Option<Mode>,
    /// Cluster-forming threshold; repeatable.
    #[arg(
        long = "cluster-extent-thr",
        env = "MESHSPM_CLUSTER_EXTENT_THR",
        value_delimiter = ','
    )]
    cluster_extent_thr: Vec<f64>,
    #[arg(long, env = "MESHSPM_WORKERS")]
    workers: Option<usize>,
    #[arg(long, env = "MESHSPM_OUT")]
    out: Option<PathBuf>,
    /// Keep per-stage wall-clock timings in the manifest.
    #[arg(long)]
    record_timings: bool,
}

impl Settings {
    fn resolve(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::read(path)?,
            None => RunConfig::default(),
        };
        let i = &mut c.input;
        if self.mesh.is_some() || self.vertices.is_some() {
            i.mesh = self.mesh;
            i.vertices = self.vertices;
            i.faces = self.faces;
        }
        set(&mut i.design, self.design);
        set(&mut i.phenotype, self.phenotype);
        set(&mut i.beta_map, self.beta_map);
        if !self.interest.is_empty() {
            c.model.interest = self.interest;
        }
        if !self.nuisance.is_empty() {
            c.model.nuisance = self.nuisance;
        }
        set(&mut c.model.response, self.response);
        if let Some(e) = self.estimator {
            c.model.estimator = e;
        }
        if self.no_standardize {
            c.model.standardize = false;
        }
        set_value(&mut c.tfce.e, self.tfce_e);
        set_value(&mut c.tfce.h, self.tfce_h);
        set_value(&mut c.tfce.num_steps, self.tfce_steps);
        set_value(&mut c.tfce.min_cluster_vertices, self.min_cluster);
        set_value(&mut c.permutation.count, self.permutations);
        set_value(&mut c.permutation.seed, self.seed);
        set(&mut c.permutation.workers, self.workers);
        set_value(&mut c.correction.method, self.correction);
        set_value(&mut c.correction.q, self.q);
        c.correction.pooled |= self.pooled;
        set_value(&mut c.run.mode, self.mode);
        if !self.cluster_extent_thr.is_empty() {
            c.run.cluster_extent_thresholds = self.cluster_extent_thr;
        }
        set(&mut c.run.out, self.out);
        c.run.record_timings |= self.record_timings;
        c.validate()?;
        Ok(c)
    }
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn set_value<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("summary serialises"));
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(s) => {
            let out = pipeline::cmd_fit(&s.resolve()?)?;
            print_json(&serde_json::json!({ "out": out }));
        }
        Command::Infer(s) => {
            let (out, summary) = pipeline::cmd_infer(&s.resolve()?)?;
            print_json(&serde_json::json!({ "out": out, "models": summary.models }));
        }
        Command::Sweep(s) => {
            let (out, summary) = pipeline::cmd_sweep(&s.resolve()?)?;
            print_json(&serde_json::json!({ "out": out, "cells": summary.cells, "best": summary.best }));
        }
        Command::Global(s) => {
            let (out, rows) = pipeline::cmd_global(&s.resolve()?)?;
            print_json(&serde_json::json!({ "out": out, "rows": rows }));
        }
        Command::Diagnose(s) => {
            let out = pipeline::cmd_diagnose(&s.resolve()?)?;
            print_json(&serde_json::json!({ "out": out }));
        }
        Command::Verify { manifest } => {
            let m = RunManifest::parse(&std::fs::read_to_string(&manifest)?)?;
            let changed = m.changed_inputs()?;
            print_json(&serde_json::json!({ "changed": changed }));
            if !changed.is_empty() {
                return Err(Error::Validation(format!(
                    "{} input(s) changed since the run",
                    changed.len()
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e.kind() {
                ErrorKind::Validation => "validation",
                ErrorKind::Numerical => "numerical",
                ErrorKind::Io => "io",
            };
            eprintln!(
                "{}",
                serde_json::json!({ "error": { "kind": kind, "message": e.to_string() } })
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
