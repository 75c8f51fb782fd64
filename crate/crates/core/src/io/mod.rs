//! Tabular input and output.
//!
//! Design and phenotype tables are CSV with a header row whose first field
//! is `subject_id`. Phenotype tables hold one column per vertex, in vertex
//! order. Numbers use `.` as the decimal separator.

mod config;
mod manifest;

pub use config::{
    CorrectionConfig, InputConfig, Mode, ModelConfig, PermutationConfig, RunConfig, RunSection, SignalConfig,
    SweepSection,
};
pub use manifest::{digest_bytes, digest_file, FileDigest, RunManifest, FORMAT_VERSION};

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glm::{DesignMatrix, PhenotypeMatrix};
use crate::mesh::{ply, text, TriangleMesh};

const SUBJECT_COLUMN: &str = "subject_id";

/// Named numeric columns keyed by subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectTable {
    pub subject_ids: Vec<String>,
    pub names: Vec<String>,
    /// Column-major: `columns[j][s]`.
    pub columns: Vec<Vec<f64>>,
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        Error::Csv(e)
    } else {
        Error::Parse(e.to_string())
    }
}

impl SubjectTable {
    pub fn parse<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(csv_error)?.clone();
        if header.get(0) != Some(SUBJECT_COLUMN) {
            return Err(Error::Parse(format!("first column must be '{SUBJECT_COLUMN}'")));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut seen = HashMap::new();
        for (j, name) in names.iter().enumerate() {
            if name.is_empty() || seen.insert(name.as_str(), j).is_some() {
                return Err(Error::Parse(format!("empty or duplicate column name '{name}'")));
            }
        }
        let mut subject_ids = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        let mut ids = HashMap::new();
        for record in rdr.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map_or(0, |p| p.line());
            let id = record.get(0).unwrap_or("");
            if id.is_empty() {
                return Err(Error::Parse(format!("line {line}: empty subject id")));
            }
            if ids.insert(id.to_string(), ()).is_some() {
                return Err(Error::Parse(format!("line {line}: duplicate subject '{id}'")));
            }
            for (j, col) in columns.iter_mut().enumerate() {
                let field = record.get(j + 1).unwrap_or("");
                let value: f64 = field.parse().map_err(|_| {
                    Error::Parse(format!("line {line}, column '{}': '{field}' is not a number", names[j]))
                })?;
                if !value.is_finite() {
                    return Err(Error::Parse(format!(
                        "line {line}, column '{}': non-finite value",
                        names[j]
                    )));
                }
                col.push(value);
            }
            subject_ids.push(id.to_string());
        }
        Ok(SubjectTable {
            subject_ids,
            names,
            columns,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(File::open(path)?)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|j| &self.columns[j][..])
    }

    /// Design with the named interest and nuisance columns and an appended
    /// intercept.
    pub fn design(&self, interest: &[String], nuisance: &[String]) -> Result<DesignMatrix> {
        if interest.is_empty() {
            return Err(Error::Validation("no interest columns given".into()));
        }
        let mut cols: Vec<(&str, &[f64])> = Vec::new();
        for name in interest.iter().chain(nuisance) {
            let values = self
                .column(name)
                .ok_or_else(|| Error::Validation(format!("design has no column '{name}'")))?;
            cols.push((name, values));
        }
        let interest: Vec<&str> = interest.iter().map(String::as_str).collect();
        let nuisance: Vec<&str> = nuisance.iter().map(String::as_str).collect();
        DesignMatrix::with_intercept(&cols, &interest, &nuisance)
    }

    /// Phenotype matrix with one column per table column.
    pub fn phenotype(&self) -> Result<PhenotypeMatrix> {
        let values = DMatrix::from_fn(self.subject_ids.len(), self.columns.len(), |s, v| self.columns[v][s]);
        PhenotypeMatrix::new(values, self.subject_ids.clone())
    }
}

/// Reorder `phenotype` rows to follow `subject_ids`; both must list the same
/// subjects.
pub fn align_subjects(subject_ids: &[String], phenotype: &PhenotypeMatrix) -> Result<PhenotypeMatrix> {
    if subject_ids == phenotype.subject_ids() {
        return Ok(phenotype.clone());
    }
    let index: HashMap<&str, usize> = phenotype
        .subject_ids()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    if index.len() != subject_ids.len() {
        return Err(Error::Validation(format!(
            "design has {} subjects, phenotype has {}",
            subject_ids.len(),
            index.len()
        )));
    }
    let rows = subject_ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Validation(format!("subject '{id}' has no phenotype row")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(phenotype.select_subjects(&rows))
}

/// Per-vertex coefficients from a CSV with a `beta` column, in vertex order.
pub fn parse_beta_map<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let col = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .position(|h| h == "beta")
        .ok_or_else(|| Error::Parse("beta map needs a 'beta' column".into()))?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let field = record.get(col).unwrap_or("");
        let b: f64 = field
            .parse()
            .map_err(|_| Error::Parse(format!("beta '{field}' is not a number")))?;
        if !(-1.0..=1.0).contains(&b) {
            return Err(Error::Parse(format!("beta {b} outside [-1, 1]")));
        }
        out.push(b);
    }
    Ok(out)
}

pub fn read_beta_map(path: &Path) -> Result<Vec<f64>> {
    parse_beta_map(File::open(path)?)
}

/// A PLY file, or a pair of whitespace-separated vertex and face files.
pub fn read_mesh(input: &InputConfig) -> Result<TriangleMesh> {
    match (&input.mesh, &input.vertices, &input.faces) {
        (Some(path), None, None) => ply::read_ply(File::open(path)?),
        (None, Some(v), Some(f)) => text::read_text_mesh(v, f),
        _ => Err(Error::Validation(
            "give either a PLY mesh or both vertex and face files".into(),
        )),
    }
}

pub fn write_csv<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
