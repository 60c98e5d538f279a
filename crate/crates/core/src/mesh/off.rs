//! Object File Format. Polygonal faces are fan-triangulated on load.

use std::fmt::Write;

use super::TriangleMesh;
use crate::geom::Point3;
use crate::{Error, Result};

pub(super) fn parse(text: &str) -> Result<(Vec<Point3>, Vec<[usize; 3]>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim())).filter(|(_, l)| !l.is_empty());
    let bad = |line: usize, message: &str| Error::Parse { line, message: message.to_string() };

    let (line, first) = lines.next().ok_or_else(|| bad(0, "empty file"))?;
    let header = match first.strip_prefix("OFF") {
        Some(rest) => rest.trim(),
        None => return Err(bad(line, "missing OFF header")),
    };
    let (line, counts) = if header.is_empty() { lines.next().ok_or_else(|| bad(line, "missing counts"))? } else { (line, header) };
    let counts: Vec<usize> = counts.split_whitespace().map(|t| t.parse().map_err(|_| bad(line, "bad count"))).collect::<Result<_>>()?;
    if counts.len() < 2 {
        return Err(bad(line, "expected vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines.next().ok_or_else(|| bad(0, "unexpected end of vertices"))?;
        let c: Vec<f64> =
            l.split_whitespace().take(3).map(|t| t.parse().map_err(|_| bad(line, "bad coordinate"))).collect::<Result<_>>()?;
        if c.len() != 3 {
            return Err(bad(line, "vertex needs three coordinates"));
        }
        vertices.push(Point3::new(c[0], c[1], c[2]));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, l) = lines.next().ok_or_else(|| bad(0, "unexpected end of faces"))?;
        let idx: Vec<usize> = l.split_whitespace().map(|t| t.parse().map_err(|_| bad(line, "bad index"))).collect::<Result<_>>()?;
        let n = *idx.first().ok_or_else(|| bad(line, "empty face"))?;
        if n < 3 || idx.len() < n + 1 {
            return Err(bad(line, "face needs at least three indices"));
        }
        let poly = &idx[1..=n];
        for k in 1..n - 1 {
            faces.push([poly[0], poly[k], poly[k + 1]]);
        }
    }
    Ok((vertices, faces))
}

pub(super) fn write(mesh: &TriangleMesh) -> String {
    let mut out = String::from("OFF\n");
    writeln!(out, "{} {} {}", mesh.vertices().len(), mesh.faces().len(), mesh.edge_count()).unwrap();
    for p in mesh.vertices() {
        writeln!(out, "{:?} {:?} {:?}", p.x, p.y, p.z).unwrap();
    }
    for f in mesh.faces() {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2]).unwrap();
    }
    out
}
