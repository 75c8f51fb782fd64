//! ASCII PLY reading and writing.
//!
//! Reading accepts any element layout as long as there is a `vertex` element
//! with `x`, `y`, `z` properties and a `face` element whose index list is
//! named `vertex_indices` or `vertex_index`. Faces must be triangles. Unknown
//! elements and properties are skipped. Binary encodings are rejected.

use std::io::{Read, Write};

use super::{Point, TriangleMesh};
use crate::error::{Error, Result};

const MAX_PREALLOC: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
enum Property {
    Scalar(String),
    List(String),
}

#[derive(Debug, Clone, PartialEq)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

const SCALAR_TYPES: &[&str] = &[
    "char", "uchar", "short", "ushort", "int", "uint", "float", "double", "int8", "uint8", "int16", "uint16", "int32",
    "uint32", "float32", "float64",
];

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(format!("ply: {}", msg.into()))
}

fn check_type(t: &str) -> Result<()> {
    if SCALAR_TYPES.contains(&t) {
        Ok(())
    } else {
        Err(parse_err(format!("unknown property type '{t}'")))
    }
}

/// Raw vertex positions and triangles from ASCII PLY text.
pub fn parse_ply(text: &str) -> Result<(Vec<Point>, Vec<[usize; 3]>)> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some("ply") => {}
        _ => return Err(parse_err("missing 'ply' magic")),
    }

    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    let mut header_done = false;
    for line in lines.by_ref() {
        let mut tok = line.split_whitespace();
        let Some(keyword) = tok.next() else { continue };
        match keyword {
            "format" => {
                match (tok.next(), tok.next()) {
                    (Some("ascii"), Some("1.0")) => {}
                    (Some(f), _) if f.starts_with("binary") => {
                        return Err(parse_err(format!("unsupported format '{f}'")))
                    }
                    _ => return Err(parse_err(format!("bad format line '{line}'"))),
                }
                saw_format = true;
            }
            "comment" | "obj_info" => {}
            "element" => {
                let name = tok.next().ok_or_else(|| parse_err("element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| parse_err(format!("bad element count in '{line}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_err("property before any element"))?;
                let kind = tok.next().ok_or_else(|| parse_err("empty property"))?;
                let prop = if kind == "list" {
                    let (Some(count_t), Some(item_t), Some(name)) = (tok.next(), tok.next(), tok.next()) else {
                        return Err(parse_err(format!("bad list property '{line}'")));
                    };
                    check_type(count_t)?;
                    check_type(item_t)?;
                    Property::List(name.to_string())
                } else {
                    check_type(kind)?;
                    let name = tok.next().ok_or_else(|| parse_err("property without name"))?;
                    Property::Scalar(name.to_string())
                };
                element.properties.push(prop);
            }
            "end_header" => {
                header_done = true;
                break;
            }
            other => return Err(parse_err(format!("unexpected header keyword '{other}'"))),
        }
    }
    if !saw_format {
        return Err(parse_err("missing format line"));
    }
    if !header_done {
        return Err(parse_err("missing end_header"));
    }

    let mut body = lines.flat_map(str::split_whitespace);
    let mut next_token = |what: &str| {
        body.next()
            .ok_or_else(|| parse_err(format!("unexpected end of data reading {what}")))
    };

    let mut vertices: Vec<Point> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut have_vertices = false;
    let mut have_faces = false;
    for element in &elements {
        match element.name.as_str() {
            "vertex" => {
                let slot = |n: &str| {
                    element
                        .properties
                        .iter()
                        .position(|p| p == &Property::Scalar(n.to_string()))
                        .ok_or_else(|| parse_err(format!("vertex element lacks '{n}'")))
                };
                let xyz = [slot("x")?, slot("y")?, slot("z")?];
                vertices.reserve(element.count.min(MAX_PREALLOC));
                let mut row = vec![0.0; element.properties.len()];
                for _ in 0..element.count {
                    for (k, prop) in element.properties.iter().enumerate() {
                        match prop {
                            Property::Scalar(_) => row[k] = parse_f64(next_token("vertex")?)?,
                            Property::List(_) => skip_list(&mut next_token)?,
                        }
                    }
                    vertices.push([row[xyz[0]], row[xyz[1]], row[xyz[2]]]);
                }
                have_vertices = true;
            }
            "face" => {
                let list = element
                    .properties
                    .iter()
                    .position(|p| matches!(p, Property::List(n) if n == "vertex_indices" || n == "vertex_index"))
                    .ok_or_else(|| parse_err("face element lacks vertex_indices list"))?;
                triangles.reserve(element.count.min(MAX_PREALLOC));
                for f in 0..element.count {
                    for (k, prop) in element.properties.iter().enumerate() {
                        match prop {
                            Property::List(_) if k == list => {
                                let n = parse_index(next_token("face")?)?;
                                if n != 3 {
                                    return Err(parse_err(format!(
                                        "face {f} has {n} vertices; only triangles are supported"
                                    )));
                                }
                                let mut tri = [0usize; 3];
                                for slot in &mut tri {
                                    *slot = parse_index(next_token("face")?)?;
                                }
                                triangles.push(tri);
                            }
                            Property::List(_) => skip_list(&mut next_token)?,
                            Property::Scalar(_) => {
                                parse_f64(next_token("face")?)?;
                            }
                        }
                    }
                }
                have_faces = true;
            }
            _ => {
                for _ in 0..element.count {
                    for prop in &element.properties {
                        match prop {
                            Property::Scalar(_) => {
                                parse_f64(next_token(&element.name)?)?;
                            }
                            Property::List(_) => skip_list(&mut next_token)?,
                        }
                    }
                }
            }
        }
    }
    if !have_vertices {
        return Err(parse_err("no vertex element"));
    }
    if !have_faces {
        return Err(parse_err("no face element"));
    }
    Ok((vertices, triangles))
}

fn skip_list<'a, F>(next_token: &mut F) -> Result<()>
where
    F: FnMut(&str) -> Result<&'a str>,
{
    let n = parse_index(next_token("list")?)?;
    for _ in 0..n {
        parse_f64(next_token("list")?)?;
    }
    Ok(())
}

fn parse_f64(tok: &str) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| parse_err(format!("bad number '{tok}'")))
}

fn parse_index(tok: &str) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| parse_err(format!("bad index '{tok}'")))
}

/// Parse ASCII PLY and build a validated mesh.
pub fn read_ply<R: Read>(mut reader: R) -> Result<TriangleMesh> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let (vertices, triangles) = parse_ply(&text)?;
    TriangleMesh::new(vertices, triangles)
}

/// Write the mesh as ASCII PLY with extra per-vertex scalar properties.
pub fn write_ply<W: Write>(mut w: W, mesh: &TriangleMesh, properties: &[(&str, &[f64])]) -> Result<()> {
    for (name, values) in properties {
        if values.len() != mesh.vertex_count() {
            return Err(Error::DimensionMismatch(format!(
                "property '{name}' has {} values, mesh has {} vertices",
                values.len(),
                mesh.vertex_count()
            )));
        }
    }
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", mesh.vertex_count())?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property double {axis}")?;
    }
    for (name, _) in properties {
        writeln!(w, "property double {name}")?;
    }
    writeln!(w, "element face {}", mesh.triangle_count())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    for (i, p) in mesh.vertices().iter().enumerate() {
        write!(w, "{} {} {}", p[0], p[1], p[2])?;
        for (_, values) in properties {
            write!(w, " {}", values[i])?;
        }
        writeln!(w)?;
    }
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}
