//! Interior tetrahedralization of a closed surface.
//!
//! The vertex set (optionally supersampled on large faces) is triangulated
//! with incremental Bowyer–Watson insertion inside a bounding super-simplex,
//! then the cells whose centroid lies outside the surface are discarded.
//! Predicates are exact; a point on a circumsphere does not conflict with the
//! cell, and cavities are grown until every new cell is positively oriented.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{self, Aabb, Point3, Vector3};
use crate::mesh::{TriangleMesh, UnionFind};
use crate::spatial::SurfaceIndex;
use crate::tet::{InvertedCellPolicy, TetComplex};
use crate::{Error, Result};

const NONE: u32 = u32::MAX;

/// Face-connected pieces of the interior below this fraction of the total
/// volume are dropped.
pub const MIN_COMPONENT_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelaunayOptions {
    /// Extra surface samples per unit area on faces large enough to hold at
    /// least one.
    pub supersample: Option<f64>,
    pub seed: u64,
}

impl Default for DelaunayOptions {
    fn default() -> Self {
        DelaunayOptions { supersample: None, seed: 0 }
    }
}

/// Tetrahedralizes the interior of `mesh`.
pub fn delaunay_interior(mesh: &TriangleMesh, options: &DelaunayOptions) -> Result<TetComplex> {
    let mut points = mesh.vertices().to_vec();
    if let Some(density) = options.supersample {
        if !(density > 0.0) {
            return Err(Error::InvalidParameter("supersample density must be positive".into()));
        }
        points.extend(surface_samples(mesh, density, options.seed));
    }
    let full = delaunay(&points)?;
    let interior = interior_cells(&full, mesh, options.seed)?;
    Ok(drop_small_components(&interior, MIN_COMPONENT_FRACTION))
}

/// Removes face-connected components whose volume is below `fraction` of the
/// total. The input surface is a single shell, so such pieces are stray
/// cells of the unconstrained triangulation.
pub fn drop_small_components(complex: &TetComplex, fraction: f64) -> TetComplex {
    let n = complex.cell_count();
    let mut uf = UnionFind::new(n);
    for (c, adj) in complex.adjacency().iter().enumerate() {
        for d in adj.iter().flatten() {
            uf.union(c, *d);
        }
    }
    let mut volume = HashMap::new();
    for c in 0..n {
        *volume.entry(uf.find(c)).or_insert(0.0) += complex.cell_volume(c);
    }
    let total = complex.total_volume();
    if volume.values().all(|&v| v >= fraction * total) {
        return complex.clone();
    }
    complex.retain_cells(|c| volume[&uf.find(c)] >= fraction * total)
}

/// Keeps the cells whose centroid lies inside `mesh`.
pub fn interior_cells(complex: &TetComplex, mesh: &TriangleMesh, seed: u64) -> Result<TetComplex> {
    let index = SurfaceIndex::new(mesh, seed);
    let inside = classify_cells(complex, &index)?;
    Ok(complex.retain_cells(|c| inside[c]))
}

/// Inside status of every cell center. One parity ray per connected piece
/// seeds a breadth-first walk; across each shared face the status flips with
/// the parity of the surface crossings between the two centers. Ambiguous
/// crossings fall back to a ray from the neighbour's center.
fn classify_cells(complex: &TetComplex, index: &SurfaceIndex) -> Result<Vec<bool>> {
    let n = complex.cell_count();
    let centers: Vec<Point3> = (0..n).map(|c| complex.cell_center(c)).collect();
    let mut status: Vec<Option<bool>> = vec![None; n];
    let mut queue = std::collections::VecDeque::new();
    let mut scratch = Vec::new();
    for seed in 0..n {
        if status[seed].is_some() {
            continue;
        }
        status[seed] = Some(index.contains(&centers[seed])?);
        queue.push_back(seed);
        while let Some(c) = queue.pop_front() {
            let inside = status[c].unwrap();
            for d in complex.adjacency()[c].iter().flatten().copied() {
                if status[d].is_some() {
                    continue;
                }
                status[d] = Some(match index.crossings(&centers[c], &centers[d], &mut scratch) {
                    Some(k) => inside ^ (k % 2 == 1),
                    None => index.contains(&centers[d])?,
                });
                queue.push_back(d);
            }
        }
    }
    Ok(status.into_iter().map(Option::unwrap).collect())
}

/// Deterministic random points strictly inside faces, `floor(area * density)`
/// per face.
pub fn surface_samples(mesh: &TriangleMesh, density: f64, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x5a3d);
    let mut out = Vec::new();
    for fi in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(fi);
        let n = (geom::triangle_area(&a, &b, &c) * density).floor() as usize;
        for _ in 0..n {
            let (mut u, mut v): (f64, f64) = (rng.gen_range(0.02..0.98), rng.gen_range(0.02..0.98));
            if u + v > 0.98 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let (u, v) = (u.clamp(0.01, 0.98), v.clamp(0.01, 0.98));
            out.push(a + (b - a) * u + (c - a) * v);
        }
    }
    out
}

/// Delaunay tetrahedralization of a point set. Cells touching the
/// super-simplex are dropped, so near-flat hull cells with enormous
/// circumspheres may be missing. Duplicate points are skipped.
pub fn delaunay(points: &[Point3]) -> Result<TetComplex> {
    check_not_flat(points)?;
    let mut tri = Triangulation::new(points);
    for &i in &spatial_order(points) {
        tri.insert(i as u32)?;
    }
    Ok(tri.into_complex())
}

fn check_not_flat(points: &[Point3]) -> Result<()> {
    if points.len() < 4 {
        return Err(Error::DegeneratePointSet(format!("{} points", points.len())));
    }
    let a = points[0];
    let Some(b) = points.iter().find(|p| **p != a) else {
        return Err(Error::DegeneratePointSet("all points coincide".into()));
    };
    let Some(c) = points.iter().find(|p| (*b - a).cross(&(*p - a)).norm_squared() > 0.0 && geom::triangle_area(&a, b, p) > 0.0) else {
        return Err(Error::DegeneratePointSet("all points are collinear".into()));
    };
    if points.iter().all(|p| geom::orient(&a, b, c, p) == 0.0) {
        return Err(Error::DegeneratePointSet("all points are coplanar".into()));
    }
    Ok(())
}

/// Morton order of the points quantized on a 2^21 grid.
fn spatial_order(points: &[Point3]) -> Vec<usize> {
    let bb = Aabb::from_points(points);
    let ext = (bb.max - bb.min).max().max(f64::MIN_POSITIVE);
    let spread = |mut x: u64| {
        x &= 0x1f_ffff;
        x = (x | x << 32) & 0x1f00000000ffff;
        x = (x | x << 16) & 0x1f0000ff0000ff;
        x = (x | x << 8) & 0x100f00f00f00f00f;
        x = (x | x << 4) & 0x10c30c30c30c30c3;
        x = (x | x << 2) & 0x1249249249249249;
        x
    };
    let scale = ((1u64 << 21) - 1) as f64 / ext;
    let mut keyed: Vec<(u64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let q = (p - bb.min) * scale;
            (spread(q.x as u64) | spread(q.y as u64) << 1 | spread(q.z as u64) << 2, i)
        })
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, i)| i).collect()
}

struct Triangulation {
    /// Input points followed by the four super-simplex vertices.
    points: Vec<Point3>,
    real: u32,
    cells: Vec<[u32; 4]>,
    nbrs: Vec<[u32; 4]>,
    alive: Vec<bool>,
    free: Vec<u32>,
    hint: u32,
    stamp: Vec<u32>,
    round: u32,
    walk: u32,
}

struct BoundaryFace {
    cell: u32,
    k: usize,
    outside: u32,
    /// Slot in `outside` pointing back at `cell`.
    back: usize,
}

impl Triangulation {
    fn new(input: &[Point3]) -> Self {
        let bb = Aabb::from_points(input);
        let c = bb.center();
        let s = 1e4 * bb.diagonal().max(f64::MIN_POSITIVE);
        let mut points = input.to_vec();
        let real = points.len() as u32;
        points.push(c + Vector3::new(s, s, s));
        points.push(c + Vector3::new(s, -s, -s));
        points.push(c + Vector3::new(-s, s, -s));
        points.push(c + Vector3::new(-s, -s, s));
        let mut cell = [real, real + 1, real + 2, real + 3];
        let p = cell.map(|v| points[v as usize]);
        if geom::orient(&p[0], &p[1], &p[2], &p[3]) < 0.0 {
            cell.swap(2, 3);
        }
        Triangulation {
            points,
            real,
            cells: vec![cell],
            nbrs: vec![[NONE; 4]],
            alive: vec![true],
            free: Vec::new(),
            hint: 0,
            stamp: vec![0],
            round: 0,
            walk: 0,
        }
    }

    fn pt(&self, v: u32) -> &Point3 {
        &self.points[v as usize]
    }

    /// Orientation of `cell` with local vertex `k` replaced by `p`.
    fn orient_replaced(&self, cell: u32, k: usize, p: &Point3) -> f64 {
        let v = self.cells[cell as usize];
        let mut q = [*self.pt(v[0]), *self.pt(v[1]), *self.pt(v[2]), *self.pt(v[3])];
        q[k] = *p;
        geom::orient(&q[0], &q[1], &q[2], &q[3])
    }

    fn conflicts(&self, cell: u32, p: &Point3) -> bool {
        let v = self.cells[cell as usize];
        geom::in_sphere(self.pt(v[0]), self.pt(v[1]), self.pt(v[2]), self.pt(v[3]), p) > 0.0
    }

    fn locate(&mut self, point: u32) -> Result<u32> {
        let p = *self.pt(point);
        let mut c = self.hint;
        let limit = 4 * self.cells.len() + 64;
        for _ in 0..limit {
            self.walk = self.walk.wrapping_add(1);
            let start = (self.walk % 4) as usize;
            let mut next = None;
            for i in 0..4 {
                let k = (start + i) % 4;
                if self.orient_replaced(c, k, &p) < 0.0 {
                    next = Some(k);
                    break;
                }
            }
            match next {
                None => return Ok(c),
                Some(k) => {
                    let n = self.nbrs[c as usize][k];
                    if n == NONE {
                        return Err(Error::InsertionFailed { point: point as usize, reason: "walked out of the super-simplex".into() });
                    }
                    c = n;
                }
            }
        }
        Err(Error::InsertionFailed { point: point as usize, reason: "point location did not terminate".into() })
    }

    fn insert(&mut self, point: u32) -> Result<()> {
        let p = *self.pt(point);
        let start = self.locate(point)?;
        if self.cells[start as usize].iter().any(|&v| *self.pt(v) == p) {
            return Ok(());
        }
        self.round += 1;
        let round = self.round;
        let mut cavity = vec![start];
        self.stamp[start as usize] = round;
        let mut i = 0;
        while i < cavity.len() {
            let c = cavity[i];
            i += 1;
            for k in 0..4 {
                let n = self.nbrs[c as usize][k];
                if n != NONE && self.stamp[n as usize] != round && self.conflicts(n, &p) {
                    self.stamp[n as usize] = round;
                    cavity.push(n);
                }
            }
        }

        let boundary = loop {
            let mut boundary = Vec::new();
            let mut grow = None;
            'scan: for &c in &cavity {
                for k in 0..4 {
                    let n = self.nbrs[c as usize][k];
                    if n != NONE && self.stamp[n as usize] == round {
                        continue;
                    }
                    if self.orient_replaced(c, k, &p) <= 0.0 {
                        if n == NONE {
                            return Err(Error::InsertionFailed {
                                point: point as usize,
                                reason: "cavity reaches the super-simplex hull".into(),
                            });
                        }
                        grow = Some(n);
                        break 'scan;
                    }
                    let back = if n == NONE { 0 } else { self.nbrs[n as usize].iter().position(|&x| x == c).expect("symmetric adjacency") };
                    boundary.push(BoundaryFace { cell: c, k, outside: n, back });
                }
            }
            match grow {
                Some(n) => {
                    self.stamp[n as usize] = round;
                    cavity.push(n);
                }
                None => break boundary,
            }
        };

        let new_cells: Vec<[u32; 4]> = boundary
            .iter()
            .map(|f| {
                let mut v = self.cells[f.cell as usize];
                v[f.k] = point;
                v
            })
            .collect();
        for &c in &cavity {
            self.alive[c as usize] = false;
            self.free.push(c);
        }
        let mut ids = Vec::with_capacity(new_cells.len());
        for cell in &new_cells {
            let id = match self.free.pop() {
                Some(id) => {
                    self.cells[id as usize] = *cell;
                    self.nbrs[id as usize] = [NONE; 4];
                    self.alive[id as usize] = true;
                    id
                }
                None => {
                    self.cells.push(*cell);
                    self.nbrs.push([NONE; 4]);
                    self.alive.push(true);
                    self.stamp.push(0);
                    (self.cells.len() - 1) as u32
                }
            };
            ids.push(id);
        }
        let mut open: HashMap<(u32, u32), (u32, usize)> = HashMap::with_capacity(ids.len() * 3);
        for (f, &id) in boundary.iter().zip(&ids) {
            self.nbrs[id as usize][f.k] = f.outside;
            if f.outside != NONE {
                self.nbrs[f.outside as usize][f.back] = id;
            }
            let v = self.cells[id as usize];
            for j in 0..4 {
                if j == f.k {
                    continue;
                }
                // The face opposite j contains the new point and the edge of
                // the boundary face that excludes v[j].
                let mut e = [0u32; 2];
                let mut m = 0;
                for (l, &x) in v.iter().enumerate() {
                    if l != j && l != f.k {
                        e[m] = x;
                        m += 1;
                    }
                }
                let key = (e[0].min(e[1]), e[0].max(e[1]));
                if let Some((other, oj)) = open.remove(&key) {
                    self.nbrs[id as usize][j] = other;
                    self.nbrs[other as usize][oj] = id;
                } else {
                    open.insert(key, (id, j));
                }
            }
        }
        if !open.is_empty() {
            return Err(Error::InsertionFailed { point: point as usize, reason: "cavity boundary is not a closed surface".into() });
        }
        self.hint = ids[0];
        Ok(())
    }

    fn into_complex(self) -> TetComplex {
        let real = self.real;
        let cells: Vec<[usize; 4]> = self
            .cells
            .iter()
            .zip(&self.alive)
            .filter(|(c, &alive)| alive && c.iter().all(|&v| v < real))
            .map(|(c, _)| c.map(|v| v as usize))
            .collect();
        let mut points = self.points;
        points.truncate(real as usize);
        // Drop unreferenced points (duplicates) through retain.
        let complex = TetComplex::new(points, cells, InvertedCellPolicy::Reject).expect("Bowyer-Watson produces positively oriented cells");
        complex.retain_cells(|_| true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::tests::unit_cube;

    fn assert_delaunay(t: &TetComplex) {
        for c in 0..t.cell_count() {
            let [a, b, cc, d] = t.cell_points(c);
            for (vi, v) in t.vertices().iter().enumerate() {
                if t.cells()[c].contains(&vi) {
                    continue;
                }
                assert!(geom::in_sphere(&a, &b, &cc, &d, v) <= 0.0, "vertex {vi} inside cell {c}");
            }
        }
    }

    #[test]
    fn single_tetrahedron() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0), Point3::new(0.0, 0.0, 1.0)];
        let t = delaunay(&pts).unwrap();
        assert_eq!(t.cell_count(), 1);
        assert_eq!(t.interior_face_count(), 0);
    }

    #[test]
    fn cube_volume_and_cell_count() {
        let (v, f) = unit_cube();
        let mesh = TriangleMesh::new(v, f, "cube").unwrap();
        let t = delaunay_interior(&mesh, &DelaunayOptions::default()).unwrap();
        assert!(t.cell_count() == 5 || t.cell_count() == 6, "{} cells", t.cell_count());
        assert!((t.total_volume() - 1.0).abs() < 1e-12);
        assert_delaunay(&t);
        assert_eq!(2 * t.interior_face_count() + t.boundary_faces().len(), 4 * t.cell_count());
    }

    #[test]
    fn random_points_are_delaunay() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Point3> = (0..300).map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let t = delaunay(&pts).unwrap();
        assert_delaunay(&t);
        assert_eq!(t.vertices().len(), 300);
    }

    #[test]
    fn lattice_points_with_ties() {
        let mut pts = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    pts.push(Point3::new(i as f64, j as f64, k as f64));
                }
            }
        }
        let t = delaunay(&pts).unwrap();
        assert_delaunay(&t);
        assert!((t.total_volume() - 27.0).abs() < 1e-9);
    }

    #[test]
    fn coplanar_points_rejected() {
        let pts: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, (i * i) as f64, 0.0)).collect();
        assert!(matches!(delaunay(&pts), Err(Error::DegeneratePointSet(_))));
    }

    #[test]
    fn duplicates_are_skipped() {
        let mut pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0), Point3::new(0.0, 0.0, 1.0)];
        pts.push(pts[2]);
        let t = delaunay(&pts).unwrap();
        assert_eq!(t.cell_count(), 1);
    }
}
