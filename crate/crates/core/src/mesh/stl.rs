//! ASCII and binary STL. Binary files carry an 80-byte header, a
//! little-endian `u32` triangle count and 50 bytes per triangle (normal,
//! three vertices as `f32`, 16-bit attribute which is ignored).

use std::fmt::Write;

use super::TriangleMesh;
use crate::geom::Point3;
use crate::{Error, Result};

pub(super) fn parse_ascii(text: &str) -> Result<Vec<[Point3; 3]>> {
    let mut triangles = Vec::new();
    let mut current: Vec<Point3> = Vec::with_capacity(3);
    for (i, line) in text.lines().enumerate() {
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("vertex") => {
                let mut coords = [0.0; 3];
                for c in &mut coords {
                    let tok =
                        tokens.next().ok_or_else(|| Error::Parse { line: i + 1, message: "vertex needs three coordinates".into() })?;
                    *c = tok.parse().map_err(|_| Error::Parse { line: i + 1, message: format!("bad coordinate `{tok}`") })?;
                }
                current.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("endloop") => {
                if current.len() != 3 {
                    return Err(Error::Parse { line: i + 1, message: format!("facet has {} vertices", current.len()) });
                }
                triangles.push([current[0], current[1], current[2]]);
                current.clear();
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(Error::Parse { line: 0, message: "no facets found".into() });
    }
    Ok(triangles)
}

pub(super) fn parse_binary(bytes: &[u8]) -> Result<Vec<[Point3; 3]>> {
    if bytes.len() < 84 {
        return Err(Error::Parse { line: 0, message: "binary STL shorter than its header".into() });
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    if bytes.len() < 84 + 50 * count {
        return Err(Error::Parse { line: 0, message: format!("binary STL truncated: {count} triangles declared") });
    }
    let read = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
    let triangles = (0..count)
        .map(|t| {
            let base = 84 + 50 * t + 12;
            let v = |k: usize| {
                let o = base + 12 * k;
                Point3::new(read(o), read(o + 4), read(o + 8))
            };
            [v(0), v(1), v(2)]
        })
        .collect();
    Ok(triangles)
}

fn normal(t: &[Point3; 3]) -> [f32; 3] {
    let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
    let len = n.norm();
    if len > 0.0 {
        [(n.x / len) as f32, (n.y / len) as f32, (n.z / len) as f32]
    } else {
        [0.0; 3]
    }
}

pub(super) fn write_ascii(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    let name = if mesh.label().is_empty() { "mesh" } else { mesh.label() };
    writeln!(out, "solid {name}").unwrap();
    for i in 0..mesh.faces().len() {
        let t = mesh.triangle(i);
        let n = normal(&t);
        writeln!(out, "  facet normal {:e} {:e} {:e}", n[0], n[1], n[2]).unwrap();
        out.push_str("    outer loop\n");
        for p in &t {
            writeln!(out, "      vertex {:e} {:e} {:e}", p.x, p.y, p.z).unwrap();
        }
        out.push_str("    endloop\n  endfacet\n");
    }
    writeln!(out, "endsolid {name}").unwrap();
    out
}

pub(super) fn write_binary(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + 50 * mesh.faces().len());
    let mut header = [0u8; 80];
    let tag = b"binary STL";
    header[..tag.len()].copy_from_slice(tag);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.faces().len() as u32).to_le_bytes());
    for i in 0..mesh.faces().len() {
        let t = mesh.triangle(i);
        for c in normal(&t) {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for p in &t {
            for c in [p.x, p.y, p.z] {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}
