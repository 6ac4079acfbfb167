//! Plain-text mesh listing.
//!
//! ```text
//! # thinhom mesh v1
//! kind cell                      | kind thin <eps>
//! width <domain width>
//! grid <columns> <rows>
//! node <index> <x1> <x2>
//! tri <index> <a> <b> <c>
//! edge <a> <b> <lower|upper|left|right>
//! periodic <left node> <right node>
//! value <node index> <value>     (optional, one per node when a field is attached)
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so reading a written mesh
//! reproduces it exactly.

use std::fmt::Write as _;

use super::{BoundaryEdge, BoundaryTag, DomainKind, GridLayout, Mesh};
use crate::error::{Error, Result};

pub fn write_mesh_text(mesh: &Mesh, field: Option<&[f64]>) -> String {
    let mut out = String::new();
    out.push_str("# thinhom mesh v1\n");
    match mesh.kind {
        DomainKind::Cell => out.push_str("kind cell\n"),
        DomainKind::Thin { eps } => writeln!(out, "kind thin {eps}").unwrap(),
    }
    writeln!(out, "width {}", mesh.width).unwrap();
    writeln!(out, "grid {} {}", mesh.grid.columns, mesh.grid.rows).unwrap();
    for (i, p) in mesh.nodes.iter().enumerate() {
        writeln!(out, "node {i} {} {}", p[0], p[1]).unwrap();
    }
    for (i, t) in mesh.triangles.iter().enumerate() {
        writeln!(out, "tri {i} {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    for e in &mesh.boundary_edges {
        writeln!(out, "edge {} {} {}", e.nodes[0], e.nodes[1], e.tag.as_str()).unwrap();
    }
    for (l, r) in &mesh.periodic_pairs {
        writeln!(out, "periodic {l} {r}").unwrap();
    }
    if let Some(values) = field {
        for (i, v) in values.iter().enumerate() {
            writeln!(out, "value {i} {v}").unwrap();
        }
    }
    out
}

fn bad(line: usize, what: &str) -> Error {
    Error::InvalidInput(format!("mesh text line {line}: {what}"))
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T> {
    tok.and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(line, "missing or malformed number"))
}

/// Parses the listing produced by [`write_mesh_text`]; returns the mesh and the
/// attached field values, if any.
pub fn read_mesh_text(text: &str) -> Result<(Mesh, Option<Vec<f64>>)> {
    let mut kind = None;
    let mut width = None;
    let mut grid = None;
    let mut nodes = Vec::new();
    let mut triangles = Vec::new();
    let mut boundary_edges = Vec::new();
    let mut periodic_pairs = Vec::new();
    let mut values = Vec::new();

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let mut tok = raw.split_whitespace();
        match tok.next() {
            Some("kind") => {
                kind = Some(match tok.next() {
                    Some("cell") => DomainKind::Cell,
                    Some("thin") => DomainKind::Thin {
                        eps: num(tok.next(), line)?,
                    },
                    _ => return Err(bad(line, "unknown domain kind")),
                })
            }
            Some("width") => width = Some(num::<f64>(tok.next(), line)?),
            Some("grid") => {
                grid = Some(GridLayout {
                    columns: num(tok.next(), line)?,
                    rows: num(tok.next(), line)?,
                })
            }
            Some("node") => {
                let i: usize = num(tok.next(), line)?;
                if i != nodes.len() {
                    return Err(bad(line, "node indices must be consecutive"));
                }
                nodes.push([num(tok.next(), line)?, num(tok.next(), line)?]);
            }
            Some("tri") => {
                let i: usize = num(tok.next(), line)?;
                if i != triangles.len() {
                    return Err(bad(line, "triangle indices must be consecutive"));
                }
                triangles.push([num(tok.next(), line)?, num(tok.next(), line)?, num(tok.next(), line)?]);
            }
            Some("edge") => {
                let a = num(tok.next(), line)?;
                let b = num(tok.next(), line)?;
                let tag = tok
                    .next()
                    .and_then(BoundaryTag::parse)
                    .ok_or_else(|| bad(line, "unknown boundary tag"))?;
                boundary_edges.push(BoundaryEdge { nodes: [a, b], tag });
            }
            Some("periodic") => {
                periodic_pairs.push((num(tok.next(), line)?, num(tok.next(), line)?));
            }
            Some("value") => {
                let i: usize = num(tok.next(), line)?;
                if i != values.len() {
                    return Err(bad(line, "value indices must be consecutive"));
                }
                values.push(num(tok.next(), line)?);
            }
            Some(other) => return Err(bad(line, &format!("unknown record '{other}'"))),
            None => {}
        }
    }

    let kind = kind.ok_or_else(|| bad(0, "missing 'kind' record"))?;
    let width = width.ok_or_else(|| bad(0, "missing 'width' record"))?;
    let grid = grid.ok_or_else(|| bad(0, "missing 'grid' record"))?;
    if nodes.len() != grid.node_count() || triangles.len() != grid.triangle_count() {
        return Err(bad(0, "node/triangle counts do not match the grid"));
    }
    let n = nodes.len();
    let in_range = triangles.iter().flatten().all(|&i| i < n)
        && boundary_edges.iter().flat_map(|e| e.nodes).all(|i| i < n)
        && periodic_pairs.iter().all(|&(l, r)| l < n && r < n);
    if !in_range {
        return Err(bad(0, "node index out of range"));
    }
    let field = match values.len() {
        0 => None,
        m if m == n => Some(values),
        _ => return Err(bad(0, "field length does not match node count")),
    };
    Ok((
        Mesh {
            nodes,
            triangles,
            boundary_edges,
            periodic_pairs,
            kind,
            grid,
            width,
        },
        field,
    ))
}
