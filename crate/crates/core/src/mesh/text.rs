//! Two-file plain text meshes: `vertices.txt` holds one `x y z` per line,
//! `faces.txt` one zero-based `i j k` per line. Blank lines and lines
//! starting with `#` are ignored.

use std::path::Path;

use super::{Point, TriangleMesh};
use crate::error::{Error, Result};

pub fn parse_vertices(text: &str) -> Result<Vec<Point>> {
    records(text)
        .map(|record| {
            let (line_no, fields) = record?;
            let mut p = [0.0; 3];
            for (slot, tok) in p.iter_mut().zip(fields) {
                *slot = tok
                    .parse()
                    .map_err(|_| Error::Parse(format!("vertices line {line_no}: bad number '{tok}'")))?;
            }
            Ok(p)
        })
        .collect()
}

pub fn parse_faces(text: &str) -> Result<Vec<[usize; 3]>> {
    records(text)
        .map(|record| {
            let (line_no, fields) = record?;
            let mut t = [0usize; 3];
            for (slot, tok) in t.iter_mut().zip(fields) {
                *slot = tok
                    .parse()
                    .map_err(|_| Error::Parse(format!("faces line {line_no}: bad index '{tok}'")))?;
            }
            Ok(t)
        })
        .collect()
}

fn records(text: &str) -> impl Iterator<Item = Result<(usize, [&str; 3])>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .map(|(i, l)| {
            let fields: Vec<&str> = l.split_whitespace().collect();
            <[&str; 3]>::try_from(fields)
                .map(|f| (i + 1, f))
                .map_err(|f| Error::Parse(format!("line {}: expected 3 fields, found {}", i + 1, f.len())))
        })
}

pub fn parse_text_mesh(vertices: &str, faces: &str) -> Result<TriangleMesh> {
    TriangleMesh::new(parse_vertices(vertices)?, parse_faces(faces)?)
}

pub fn read_text_mesh(vertices: &Path, faces: &Path) -> Result<TriangleMesh> {
    parse_text_mesh(&std::fs::read_to_string(vertices)?, &std::fs::read_to_string(faces)?)
}
