//! Bucket grid over a surface and parity-based inside/outside queries.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{self, Aabb, Crossing, Point3, Vector3};
use crate::mesh::TriangleMesh;
use crate::{Error, Result};

/// Number of ray directions tried before a parity query gives up.
pub const MAX_RAY_ATTEMPTS: usize = 12;
/// Relative distance below which a point is taken to lie on the surface.
const ON_SURFACE_TOL: f64 = 1e-12;

/// Uniform grid over the bounding box of a surface; each grid cell lists the
/// triangles whose (slightly inflated) bounding box overlaps it.
#[derive(Debug, Clone)]
pub struct BucketGrid {
    origin: Point3,
    cell_size: Vector3,
    dims: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl BucketGrid {
    /// Default resolution: `cbrt(face count)` cells per axis.
    pub fn new(mesh: &TriangleMesh) -> Self {
        let res = (mesh.faces().len() as f64).cbrt().ceil().max(1.0) as usize;
        Self::with_resolution(mesh, res)
    }

    pub fn with_resolution(mesh: &TriangleMesh, res: usize) -> Self {
        let bb = mesh.bounding_box();
        let pad = bb.diagonal() * 1e-6;
        let origin = bb.min - Vector3::repeat(pad);
        let extent = (bb.max - bb.min) + Vector3::repeat(2.0 * pad);
        // Flat axes get a single cell.
        let longest = extent.max();
        let dims =
            [0, 1, 2].map(|a| if extent[a] < longest * 1e-3 { 1 } else { ((res as f64) * extent[a] / longest).ceil().max(1.0) as usize });
        let cell_size = Vector3::new(extent.x / dims[0] as f64, extent.y / dims[1] as f64, extent.z / dims[2] as f64);
        let mut grid = BucketGrid { origin, cell_size, dims, buckets: vec![Vec::new(); dims[0] * dims[1] * dims[2]] };
        let inflate = cell_size * 1e-6;
        for (fi, _) in mesh.faces().iter().enumerate() {
            let tri = mesh.triangle(fi);
            let bb = Aabb::from_points(&tri);
            let lo = grid.cell_of(&(bb.min - inflate));
            let hi = grid.cell_of(&(bb.max + inflate));
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        let idx = grid.index([i, j, k]);
                        grid.buckets[idx].push(fi as u32);
                    }
                }
            }
        }
        grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bucket(&self, cell: [usize; 3]) -> &[u32] {
        &self.buckets[self.index(cell)]
    }

    fn index(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Grid cell containing `p`, clamped to the grid.
    pub fn cell_of(&self, p: &Point3) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let t = ((p[a] - self.origin[a]) / self.cell_size[a]).floor();
            if t < 0.0 {
                0
            } else {
                (t as usize).min(self.dims[a] - 1)
            }
        })
    }

    /// Triangle ids from every grid cell the segment `p → q` passes
    /// through, sorted and deduplicated: a superset of the triangles it hits.
    pub fn candidates_along(&self, p: &Point3, q: &Point3, out: &mut Vec<u32>) {
        out.clear();
        let lo = self.origin;
        let hi = self.origin
            + Vector3::new(
                self.cell_size.x * self.dims[0] as f64,
                self.cell_size.y * self.dims[1] as f64,
                self.cell_size.z * self.dims[2] as f64,
            );
        // Clip the segment to the grid box.
        let d = q - p;
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for a in 0..3 {
            if d[a] == 0.0 {
                if p[a] < lo[a] || p[a] > hi[a] {
                    return;
                }
            } else {
                let (mut ta, mut tb) = ((lo[a] - p[a]) / d[a], (hi[a] - p[a]) / d[a]);
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
            }
        }
        if t0 > t1 {
            return;
        }
        let start = p + d * t0;
        let mut cell = self.cell_of(&start);
        let end = self.cell_of(&(p + d * t1));
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            if d[a] > 0.0 {
                step[a] = 1;
                let boundary = self.origin[a] + (cell[a] + 1) as f64 * self.cell_size[a];
                t_max[a] = (boundary - p[a]) / d[a];
                t_delta[a] = self.cell_size[a] / d[a];
            } else if d[a] < 0.0 {
                step[a] = -1;
                let boundary = self.origin[a] + cell[a] as f64 * self.cell_size[a];
                t_max[a] = (boundary - p[a]) / d[a];
                t_delta[a] = -self.cell_size[a] / d[a];
            }
        }
        let max_steps = self.dims.iter().sum::<usize>() + 3;
        for _ in 0..max_steps {
            out.extend_from_slice(self.bucket(cell));
            if cell == end {
                break;
            }
            let a = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if t_max[a] > t1 {
                break;
            }
            let next = cell[a] as i64 + step[a];
            if next < 0 || next >= self.dims[a] as i64 {
                break;
            }
            cell[a] = next as usize;
            t_max[a] += t_delta[a];
        }
        out.sort_unstable();
        out.dedup();
    }
}

/// A closed surface with its bucket grid, answering parity queries.
#[derive(Debug, Clone)]
pub struct SurfaceIndex<'a> {
    mesh: &'a TriangleMesh,
    grid: BucketGrid,
    directions: Vec<Vector3>,
    ray_length: f64,
    bounds: Aabb,
    tree: OnceLock<TriangleTree>,
}

impl<'a> SurfaceIndex<'a> {
    pub fn new(mesh: &'a TriangleMesh, seed: u64) -> Self {
        Self::with_grid(mesh, BucketGrid::new(mesh), seed)
    }

    pub fn with_grid(mesh: &'a TriangleMesh, grid: BucketGrid, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba11);
        let directions = (0..MAX_RAY_ATTEMPTS)
            .map(|_| loop {
                let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let n = v.norm();
                if n > 0.1 && n <= 1.0 {
                    break v / n;
                }
            })
            .collect();
        let bounds = mesh.bounding_box();
        SurfaceIndex { mesh, grid, directions, ray_length: 4.0 * bounds.diagonal().max(f64::MIN_POSITIVE), bounds, tree: OnceLock::new() }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        self.mesh
    }

    pub fn grid(&self) -> &BucketGrid {
        &self.grid
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    /// Counts proper crossings of `p → q` with the surface. `None` when any
    /// candidate crossing is degenerate.
    pub fn crossings(&self, p: &Point3, q: &Point3, scratch: &mut Vec<u32>) -> Option<usize> {
        self.grid.candidates_along(p, q, scratch);
        let mut count = 0;
        for &t in scratch.iter() {
            let [a, b, c] = self.mesh.triangle(t as usize);
            match geom::segment_crosses_triangle(p, q, &a, &b, &c) {
                Crossing::None => {}
                Crossing::Proper => count += 1,
                Crossing::Degenerate => return None,
            }
        }
        Some(count)
    }

    /// True iff a ray from `p` crosses the surface an odd number of times.
    /// Rays that meet an edge or vertex are re-drawn; a point on the surface
    /// itself counts as inside.
    pub fn contains(&self, p: &Point3) -> Result<bool> {
        let bb = &self.bounds;
        if (0..3).any(|a| p[a] < bb.min[a] || p[a] > bb.max[a]) {
            return Ok(false);
        }
        let mut scratch = Vec::new();
        for dir in &self.directions {
            let q = p + dir * self.ray_length;
            if let Some(n) = self.crossings(p, &q, &mut scratch) {
                return Ok(n % 2 == 1);
            }
        }
        if self.distance(p) <= ON_SURFACE_TOL * self.bounds.diagonal() {
            return Ok(true);
        }
        Err(Error::UnresolvableParity(p.x, p.y, p.z))
    }

    /// Unsigned distance from `p` to the surface.
    pub fn distance(&self, p: &Point3) -> f64 {
        self.tree.get_or_init(|| TriangleTree::new(self.mesh)).distance2(self.mesh, p).sqrt()
    }
}

/// Bounding-volume tree over the triangles of a mesh, for distance queries.
#[derive(Debug, Clone)]
pub struct TriangleTree {
    nodes: Vec<TreeNode>,
    order: Vec<u32>,
}

#[derive(Debug, Clone)]
struct TreeNode {
    bounds: Aabb,
    // Leaves hold `order[start..start + count]`; inner nodes hold children `start` and `start + 1`.
    start: u32,
    count: u32,
}

const LEAF_SIZE: usize = 4;

impl TriangleTree {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let n = mesh.faces().len();
        let boxes: Vec<Aabb> = (0..n).map(|t| Aabb::from_points(&mesh.triangle(t))).collect();
        let centers: Vec<Point3> = boxes.iter().map(|b| nalgebra::center(&b.min, &b.max)).collect();
        let mut tree = TriangleTree { nodes: vec![TreeNode { bounds: Aabb::empty(), start: 0, count: 0 }], order: (0..n as u32).collect() };
        let mut stack = vec![(0usize, 0usize, n)];
        while let Some((node, lo, hi)) = stack.pop() {
            let mut bounds = Aabb::empty();
            for &t in &tree.order[lo..hi] {
                bounds.grow(&boxes[t as usize].min);
                bounds.grow(&boxes[t as usize].max);
            }
            tree.nodes[node].bounds = bounds;
            if hi - lo <= LEAF_SIZE {
                tree.nodes[node].start = lo as u32;
                tree.nodes[node].count = (hi - lo) as u32;
                continue;
            }
            let ext = bounds.max - bounds.min;
            let axis = if ext.x >= ext.y && ext.x >= ext.z {
                0
            } else if ext.y >= ext.z {
                1
            } else {
                2
            };
            let mid = (lo + hi) / 2;
            tree.order[lo..hi]
                .select_nth_unstable_by(mid - lo, |&a, &b| centers[a as usize][axis].total_cmp(&centers[b as usize][axis]).then(a.cmp(&b)));
            let first = tree.nodes.len();
            tree.nodes.push(TreeNode { bounds: Aabb::empty(), start: 0, count: 0 });
            tree.nodes.push(TreeNode { bounds: Aabb::empty(), start: 0, count: 0 });
            tree.nodes[node].start = first as u32;
            stack.push((first, lo, mid));
            stack.push((first + 1, mid, hi));
        }
        tree
    }

    /// Squared distance from `p` to the nearest triangle.
    pub fn distance2(&self, mesh: &TriangleMesh, p: &Point3) -> f64 {
        let mut best = f64::INFINITY;
        if self.order.is_empty() {
            return best;
        }
        let mut stack = vec![(0usize, box_distance2(&self.nodes[0].bounds, p))];
        while let Some((node, d)) = stack.pop() {
            if d > best {
                continue;
            }
            let n = &self.nodes[node];
            if n.count > 0 {
                for &t in &self.order[n.start as usize..(n.start + n.count) as usize] {
                    let [a, b, c] = mesh.triangle(t as usize);
                    best = best.min(geom::point_triangle_distance_squared(p, &a, &b, &c));
                }
                continue;
            }
            let l = n.start as usize;
            let (dl, dr) = (box_distance2(&self.nodes[l].bounds, p), box_distance2(&self.nodes[l + 1].bounds, p));
            // Nearer child popped first.
            if dl <= dr {
                stack.push((l + 1, dr));
                stack.push((l, dl));
            } else {
                stack.push((l, dl));
                stack.push((l + 1, dr));
            }
        }
        best
    }
}

/// Squared distance from `p` to the box, zero inside.
pub fn box_distance2(b: &Aabb, p: &Point3) -> f64 {
    (0..3)
        .map(|k| {
            let d = (b.min[k] - p[k]).max(p[k] - b.max[k]).max(0.0);
            d * d
        })
        .sum()
}

/// Convenience form of [`SurfaceIndex::contains`].
pub fn point_in_mesh(point: &Point3, index: &SurfaceIndex) -> Result<bool> {
    index.contains(point)
}
