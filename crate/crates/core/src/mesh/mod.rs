//! Closed triangle surfaces: validation, vertex welding and file formats.

mod off;
mod stl;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::{self, Aabb, Point3};
use crate::{Error, Result};

/// Default welding tolerance, relative to the bounding-box diagonal.
pub const DEFAULT_WELD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceFormat {
    StlAscii,
    StlBinary,
    Off,
}

impl std::str::FromStr for SurfaceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stl-ascii" => Ok(SurfaceFormat::StlAscii),
            "stl-binary" => Ok(SurfaceFormat::StlBinary),
            "off" => Ok(SurfaceFormat::Off),
            other => Err(Error::InvalidParameter(format!("unknown surface format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// `None` auto-detects from the extension and content.
    pub format: Option<SurfaceFormat>,
    /// Welding tolerance relative to the bounding-box diagonal.
    pub weld_tol: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { format: None, weld_tol: DEFAULT_WELD_TOL }
    }
}

/// A validated closed, consistently oriented, genus-0 triangle surface with a
/// single shell.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    label: String,
}

impl TriangleMesh {
    /// Validates an indexed surface. Unreferenced vertices are dropped and
    /// the remaining ones renumbered in order of first appearance.
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>, label: impl Into<String>) -> Result<Self> {
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= vertices.len() {
                    return Err(Error::VertexOutOfRange { face: fi, vertex: v });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::RepeatedVertex { face: fi });
            }
        }
        let (vertices, faces) = compact(vertices, faces);
        check_edges(&faces)?;

        let diag = Aabb::from_points(&vertices).diagonal();
        let min_area = f64::EPSILON * diag * diag * 1e-3;
        for (fi, f) in faces.iter().enumerate() {
            let area = geom::triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
            if !(area > min_area) {
                return Err(Error::DegenerateFace { face: fi });
            }
        }

        let shells = count_shells(vertices.len(), &faces);
        if shells != 1 {
            return Err(Error::MultipleShells { shells });
        }
        let euler = euler_characteristic(vertices.len(), &faces);
        if euler != 2 {
            return Err(Error::Genus { genus: (2 - euler) / 2, euler });
        }
        let mesh = TriangleMesh { vertices, faces, label: label.into() };
        let volume = mesh.signed_volume();
        if volume <= 0.0 {
            return Err(Error::InvertedMesh { volume });
        }
        Ok(mesh)
    }

    /// Builds a mesh from a triangle soup, merging vertices closer than
    /// `weld_tol` times the bounding-box diagonal.
    pub fn from_soup(triangles: &[[Point3; 3]], weld_tol: f64, label: impl Into<String>) -> Result<Self> {
        let points: Vec<Point3> = triangles.iter().flat_map(|t| t.iter().copied()).collect();
        let (vertices, remap) = weld(&points, weld_tol);
        let faces = (0..triangles.len()).map(|t| [remap[3 * t], remap[3 * t + 1], remap[3 * t + 2]]).collect();
        TriangleMesh::new(vertices, faces, label)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }

    pub fn triangle(&self, face: usize) -> [Point3; 3] {
        let f = self.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    pub fn edge_count(&self) -> usize {
        // Closed 2-manifold: every edge has exactly two faces.
        self.faces.len() * 3 / 2
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count() as i64 + self.faces.len() as i64
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn signed_volume(&self) -> f64 {
        let origin = self.bounding_box().center();
        self.faces.iter().map(|f| geom::signed_volume(&origin, &self.vertices[f[0]], &self.vertices[f[1]], &self.vertices[f[2]])).sum()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                geom::triangle_area(&a, &b, &c)
            })
            .sum()
    }

    pub fn mean_edge_length(&self) -> f64 {
        let mut sum = 0.0;
        for f in &self.faces {
            for k in 0..3 {
                sum += (self.vertices[f[(k + 1) % 3]] - self.vertices[f[k]]).norm();
            }
        }
        sum / (3 * self.faces.len()) as f64
    }

    /// Vertex-order independent representation: vertices sorted
    /// lexicographically, each face rotated to start at its smallest index,
    /// faces sorted.
    pub fn canonical_form(&self) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
        let mut order: Vec<usize> = (0..self.vertices.len()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (&self.vertices[a], &self.vertices[b]);
            pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y)).then(pa.z.total_cmp(&pb.z))
        });
        let mut rank = vec![0; order.len()];
        for (r, &v) in order.iter().enumerate() {
            rank[v] = r;
        }
        let vertices = order.iter().map(|&v| [self.vertices[v].x, self.vertices[v].y, self.vertices[v].z]).collect();
        let mut faces: Vec<[usize; 3]> = self
            .faces
            .iter()
            .map(|f| {
                let r = [rank[f[0]], rank[f[1]], rank[f[2]]];
                let k = (0..3).min_by_key(|&k| r[k]).unwrap();
                [r[k], r[(k + 1) % 3], r[(k + 2) % 3]]
            })
            .collect();
        faces.sort_unstable();
        (vertices, faces)
    }

    pub fn save(&self, path: impl AsRef<Path>, format: SurfaceFormat) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes(format);
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn to_bytes(&self, format: SurfaceFormat) -> Vec<u8> {
        match format {
            SurfaceFormat::StlAscii => stl::write_ascii(self).into_bytes(),
            SurfaceFormat::StlBinary => stl::write_binary(self),
            SurfaceFormat::Off => off::write(self).into_bytes(),
        }
    }
}

/// Loads and validates a surface mesh. The label defaults to the file stem.
pub fn load_surface(path: impl AsRef<Path>, options: &LoadOptions) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = match options.format {
        Some(f) => f,
        None => detect_format(path, &bytes),
    };
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_surface(&bytes, format, options.weld_tol, label)
}

pub fn parse_surface(bytes: &[u8], format: SurfaceFormat, weld_tol: f64, label: impl Into<String>) -> Result<TriangleMesh> {
    match format {
        SurfaceFormat::StlAscii => {
            let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
            TriangleMesh::from_soup(&stl::parse_ascii(text)?, weld_tol, label)
        }
        SurfaceFormat::StlBinary => TriangleMesh::from_soup(&stl::parse_binary(bytes)?, weld_tol, label),
        SurfaceFormat::Off => {
            let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
            let (vertices, faces) = off::parse(text)?;
            if weld_tol > 0.0 {
                let (welded, remap) = weld(&vertices, weld_tol);
                let faces = faces.iter().map(|f| [remap[f[0]], remap[f[1]], remap[f[2]]]).collect();
                TriangleMesh::new(welded, faces, label)
            } else {
                TriangleMesh::new(vertices, faces, label)
            }
        }
    }
}

pub fn detect_format(path: &Path, bytes: &[u8]) -> SurfaceFormat {
    let ext = path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).unwrap_or_default();
    if ext == "off" || bytes.starts_with(b"OFF") {
        return SurfaceFormat::Off;
    }
    if bytes.len() >= 84 {
        let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        if bytes.len() == 84 + 50 * n {
            return SurfaceFormat::StlBinary;
        }
    }
    let head = &bytes[..bytes.len().min(512)];
    let trimmed = String::from_utf8_lossy(head);
    if trimmed.trim_start().starts_with("solid") {
        SurfaceFormat::StlAscii
    } else {
        SurfaceFormat::StlBinary
    }
}

/// Merges points closer than `rel_tol` times the bounding-box diagonal.
/// Returns the representatives (in order of first appearance) and the map
/// from input index to representative.
pub fn weld(points: &[Point3], rel_tol: f64) -> (Vec<Point3>, Vec<usize>) {
    let tol = rel_tol * Aabb::from_points(points).diagonal();
    let mut reps: Vec<Point3> = Vec::new();
    let mut remap = Vec::with_capacity(points.len());
    if !(tol > 0.0) {
        let mut exact: HashMap<[u64; 3], usize> = HashMap::new();
        for p in points {
            let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
            let id = *exact.entry(key).or_insert_with(|| {
                reps.push(*p);
                reps.len() - 1
            });
            remap.push(id);
        }
        return (reps, remap);
    }
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let key = |p: &Point3| [(p.x / tol).floor() as i64, (p.y / tol).floor() as i64, (p.z / tol).floor() as i64];
    for p in points {
        let k = key(p);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &r in list {
                            if (reps[r] - p).norm() <= tol {
                                found = Some(r);
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        let id = found.unwrap_or_else(|| {
            reps.push(*p);
            cells.entry(k).or_default().push(reps.len() - 1);
            reps.len() - 1
        });
        remap.push(id);
    }
    (reps, remap)
}

fn compact(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> (Vec<Point3>, Vec<[usize; 3]>) {
    let mut map = vec![usize::MAX; vertices.len()];
    let mut kept = Vec::new();
    let faces = faces
        .into_iter()
        .map(|f| {
            f.map(|v| {
                if map[v] == usize::MAX {
                    map[v] = kept.len();
                    kept.push(vertices[v]);
                }
                map[v]
            })
        })
        .collect();
    (kept, faces)
}

fn check_edges(faces: &[[usize; 3]]) -> Result<()> {
    // (undirected count, directed count a<b, directed count b<a)
    let mut edges: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::with_capacity(faces.len() * 2);
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let e = edges.entry((a.min(b), a.max(b))).or_default();
            e.0 += 1;
            if a < b {
                e.1 += 1;
            } else {
                e.2 += 1;
            }
        }
    }
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let (count, fwd, bwd) = edges[&key];
            match count {
                1 => return Err(Error::OpenBoundary(key.0, key.1)),
                2 if fwd != 1 || bwd != 1 => return Err(Error::InconsistentOrientation(key.0, key.1)),
                2 => {}
                _ => return Err(Error::NonManifoldEdge { a: key.0, b: key.1, count }),
            }
        }
    }
    Ok(())
}

fn count_shells(vertex_count: usize, faces: &[[usize; 3]]) -> usize {
    let mut uf = UnionFind::new(vertex_count);
    for f in faces {
        uf.union(f[0], f[1]);
        uf.union(f[1], f[2]);
    }
    (0..vertex_count).filter(|&v| uf.find(v) == v).count()
}

fn euler_characteristic(vertex_count: usize, faces: &[[usize; 3]]) -> i64 {
    let mut edges = std::collections::HashSet::with_capacity(faces.len() * 2);
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    vertex_count as i64 - edges.len() as i64 + faces.len() as i64
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn unit_cube() -> (Vec<Point3>, Vec<[usize; 3]>) {
        let v = (0..8).map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64)).collect();
        let f = vec![
            [0, 2, 1],
            [1, 2, 3], // z = 0
            [4, 5, 6],
            [5, 7, 6], // z = 1
            [0, 1, 4],
            [1, 5, 4], // y = 0
            [2, 6, 3],
            [3, 6, 7], // y = 1
            [0, 4, 2],
            [2, 4, 6], // x = 0
            [1, 3, 5],
            [3, 7, 5], // x = 1
        ];
        (v, f)
    }

    #[test]
    fn cube_topology() {
        let (v, f) = unit_cube();
        let m = TriangleMesh::new(v, f, "cube").unwrap();
        assert_eq!(m.vertices().len(), 8);
        assert_eq!(m.edge_count(), 18);
        assert_eq!(m.faces().len(), 12);
        assert_eq!(m.euler_characteristic(), 2);
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
        assert!((m.area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn deleted_facet_is_open_boundary() {
        let (v, mut f) = unit_cube();
        f.remove(3);
        let err = TriangleMesh::new(v, f, "cube").unwrap_err();
        assert!(matches!(err, Error::OpenBoundary(..)), "{err}");
        assert!(err.to_string().starts_with("open boundary at edge ("));
    }

    #[test]
    fn flipped_facet_is_inconsistent() {
        let (v, mut f) = unit_cube();
        f[5].swap(1, 2);
        let err = TriangleMesh::new(v, f, "cube").unwrap_err();
        assert!(matches!(err, Error::InconsistentOrientation(..)), "{err}");
    }

    #[test]
    fn fully_flipped_is_inverted() {
        let (v, mut f) = unit_cube();
        for face in &mut f {
            face.swap(1, 2);
        }
        assert!(matches!(TriangleMesh::new(v, f, "cube"), Err(Error::InvertedMesh { .. })));
    }

    #[test]
    fn out_of_range_and_repeated() {
        let (v, mut f) = unit_cube();
        f[0] = [0, 2, 9];
        assert!(matches!(TriangleMesh::new(v.clone(), f.clone(), ""), Err(Error::VertexOutOfRange { face: 0, vertex: 9 })));
        f[0] = [0, 2, 2];
        assert!(matches!(TriangleMesh::new(v, f, ""), Err(Error::RepeatedVertex { face: 0 })));
    }

    #[test]
    fn two_cubes_are_two_shells() {
        let (v, f) = unit_cube();
        let mut v2 = v.clone();
        v2.extend(v.iter().map(|p| p + crate::Vector3::new(3.0, 0.0, 0.0)));
        let mut f2 = f.clone();
        f2.extend(f.iter().map(|t| t.map(|i| i + 8)));
        assert!(matches!(TriangleMesh::new(v2, f2, ""), Err(Error::MultipleShells { shells: 2 })));
    }

    #[test]
    fn torus_has_genus_one() {
        // 4x4 quad torus
        let (nu, nv) = (4, 4);
        let mut v = Vec::new();
        for i in 0..nu {
            for j in 0..nv {
                let (a, b) = (i as f64 / nu as f64 * std::f64::consts::TAU, j as f64 / nv as f64 * std::f64::consts::TAU);
                v.push(Point3::new((3.0 + b.cos()) * a.cos(), (3.0 + b.cos()) * a.sin(), b.sin()));
            }
        }
        let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
        let mut f = Vec::new();
        for i in 0..nu {
            for j in 0..nv {
                f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let err = TriangleMesh::new(v, f, "").unwrap_err();
        assert!(matches!(err, Error::Genus { genus: 1, euler: 0 }), "{err}");
    }

    #[test]
    fn welding_merges_within_tolerance() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(1e-9, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0)];
        let (reps, remap) = weld(&pts, 1e-6);
        assert_eq!(reps.len(), 3);
        assert_eq!(remap, vec![0, 1, 0, 2]);
    }
}
