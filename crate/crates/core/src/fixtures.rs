//! Synthetic tubular meshes with known centerlines.
//!
//! The cylinder is built directly from staggered vertex rings. The branching
//! fixtures are extracted by marching tetrahedra from an implicit smooth union
//! of tapered capsules, with optional low-frequency noise in the implicit
//! function.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{self, Aabb, Point3, Vector3};
use crate::graph::LinkMetric;
use crate::mesh::TriangleMesh;
use crate::tree::SkeletonTree;
use crate::{Error, NodeId, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FixtureSpec {
    Cylinder(CylinderParams),
    YTube(YTubeParams),
    ThreeLevelTree(ThreeLevelParams),
    Box(BoxParams),
}

impl FixtureSpec {
    /// Default parameters for a kind name: `cylinder`, `y_tube`,
    /// `three_level_tree` or `box`.
    pub fn default_for(kind: &str) -> Result<Self> {
        match kind.replace('-', "_").as_str() {
            "cylinder" => Ok(FixtureSpec::Cylinder(CylinderParams::default())),
            "y_tube" => Ok(FixtureSpec::YTube(YTubeParams::default())),
            "three_level_tree" => Ok(FixtureSpec::ThreeLevelTree(ThreeLevelParams::default())),
            "box" => Ok(FixtureSpec::Box(BoxParams::default())),
            _ => Err(Error::InvalidParameter(format!("unknown fixture kind `{kind}`"))),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FixtureSpec::Cylinder(_) => "cylinder",
            FixtureSpec::YTube(_) => "y_tube",
            FixtureSpec::ThreeLevelTree(_) => "three_level_tree",
            FixtureSpec::Box(_) => "box",
        }
    }

    pub fn set_noise(&mut self, noise: f64) {
        match self {
            FixtureSpec::Cylinder(p) => p.noise = noise,
            FixtureSpec::YTube(p) => p.noise = noise,
            FixtureSpec::ThreeLevelTree(p) => p.noise = noise,
            FixtureSpec::Box(_) => {}
        }
    }
}

/// Centerline polylines of a fixture. Each centerline starts where its
/// parent ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub centerlines: Vec<Vec<Point3>>,
    pub parents: Vec<Option<usize>>,
    pub radii: Vec<f64>,
    pub junctions: Vec<Point3>,
    /// Free ends of the centerlines that have no children.
    pub tips: Vec<Point3>,
    pub analytic_volume: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub mesh: TriangleMesh,
    pub truth: GroundTruth,
}

pub fn generate_fixture(spec: &FixtureSpec, seed: u64) -> Result<Fixture> {
    match spec {
        FixtureSpec::Cylinder(p) => cylinder(p, seed),
        FixtureSpec::YTube(p) => y_tube(p, seed),
        FixtureSpec::ThreeLevelTree(p) => three_level_tree(p, seed),
        FixtureSpec::Box(p) => box_fixture(p),
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn check_noise(noise: f64) -> Result<()> {
    if (0.0..0.5).contains(&noise) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("noise must be in [0, 0.5), got {noise}")))
    }
}

/// Smooth radial bump field built from a few random plane waves.
#[derive(Debug, Clone)]
struct Noise {
    waves: Vec<(Vector3, f64)>,
    frequency: f64,
}

impl Noise {
    fn new(rng: &mut ChaCha8Rng, frequency: f64) -> Self {
        let waves = (0..4)
            .map(|_| {
                let d = loop {
                    let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    if v.norm() > 0.2 && v.norm() <= 1.0 {
                        break v.normalize();
                    }
                };
                (d, rng.gen_range(0.0..2.0 * PI))
            })
            .collect();
        Noise { waves, frequency }
    }

    /// In [-1, 1].
    fn at(&self, p: &Point3) -> f64 {
        self.waves.iter().map(|(d, phase)| (self.frequency * p.coords.dot(d) + phase).sin()).sum::<f64>() / self.waves.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CylinderParams {
    pub radius: f64,
    pub length: f64,
    /// Approximate number of triangles.
    pub faces: usize,
    /// Radial noise amplitude as a fraction of the radius.
    pub noise: f64,
    /// Extra radius at `z = 0`, as a fraction of the radius, fading out over
    /// two radii. Makes the base the widest part of the tube.
    pub flare: f64,
}

impl Default for CylinderParams {
    fn default() -> Self {
        CylinderParams { radius: 1.0, length: 10.0, faces: 2000, noise: 0.0, flare: 0.0 }
    }
}

fn flare_factor(flare: f64, s: f64, radius: f64) -> f64 {
    let u = (1.0 - s / (2.0 * radius)).max(0.0);
    1.0 + flare * u * u
}

/// Joins two closed rings of vertices, each ordered by increasing angle, by
/// a strip of triangles; `angle_a(i)` and `angle_b(j)` are unwrapped angles.
fn stitch(a: &[usize], angle_a: impl Fn(usize) -> f64, b: &[usize], angle_b: impl Fn(usize) -> f64) -> Vec<[usize; 3]> {
    let (na, nb) = (a.len(), b.len());
    let a0 = angle_a(0);
    // Start b at its last vertex not past a's first one.
    let step_b = 2.0 * PI / nb as f64;
    let j0 = ((a0 - angle_b(0)) / step_b).floor() as i64;
    let bj = |j: i64| b[(j0 + j).rem_euclid(nb as i64) as usize];
    let bang = |j: i64| angle_b(0) + (j0 + j) as f64 * step_b;
    let mut out = Vec::with_capacity(na + nb);
    let (mut i, mut j) = (0usize, 0i64);
    while i < na || j < nb as i64 {
        let next_a = if i < na { angle_a(i + 1) } else { f64::INFINITY };
        let next_b = if j < nb as i64 { bang(j + 1) } else { f64::INFINITY };
        if next_a <= next_b {
            out.push([a[i % na], a[(i + 1) % na], bj(j)]);
            i += 1;
        } else {
            out.push([a[i % na], bj(j + 1), bj(j)]);
            j += 1;
        }
    }
    out
}

/// Flips triangles so their normal agrees with `outward(centroid)`.
fn orient_by(tris: &mut [[usize; 3]], pts: &[Point3], outward: impl Fn(&Point3) -> Vector3) {
    for t in tris.iter_mut() {
        let [a, b, c] = t.map(|i| pts[i]);
        let n = (b - a).cross(&(c - a));
        if n.dot(&outward(&geom::centroid(&[a, b, c]))) < 0.0 {
            t.swap(1, 2);
        }
    }
}

fn cylinder(p: &CylinderParams, seed: u64) -> Result<Fixture> {
    check_positive("radius", p.radius)?;
    check_positive("length", p.length)?;
    check_noise(p.noise)?;
    if p.flare < 0.0 || p.flare > 1.0 {
        return Err(Error::InvalidParameter("flare must be in [0, 1]".into()));
    }
    let (r, len) = (p.radius, p.length);
    let n_theta = ((PI * p.faces as f64 / (len / r + 1.0)).sqrt().round() as usize).max(6);
    let d_theta = 2.0 * PI / n_theta as f64;
    let spacing = r * d_theta;
    let m = ((len / spacing).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Noise::new(&mut rng, 1.5 / r);
    let radius_at = |theta: f64, z: f64| {
        let base = r * flare_factor(p.flare, z, r);
        let q = Point3::new(theta.cos() * r, theta.sin() * r, z);
        base * (1.0 + p.noise * noise.at(&q))
    };

    let mut pts = Vec::new();
    let mut lateral = Vec::new();
    let mut rings: Vec<Vec<usize>> = Vec::new();
    for k in 0..=m {
        let z = len * k as f64 / m as f64;
        let ring: Vec<usize> = (0..n_theta)
            .map(|i| {
                let th = (i as f64 + 0.5 * k as f64) * d_theta;
                let rr = radius_at(th, z);
                pts.push(Point3::new(rr * th.cos(), rr * th.sin(), z));
                pts.len() - 1
            })
            .collect();
        rings.push(ring);
    }
    for k in 0..m {
        let (ka, kb) = (k as f64, (k + 1) as f64);
        lateral.extend(stitch(&rings[k], |i| (i as f64 + 0.5 * ka) * d_theta, &rings[k + 1], |j| (j as f64 + 0.5 * kb) * d_theta));
    }
    orient_by(&mut lateral, &pts, |c| Vector3::new(c.x, c.y, 0.0));

    let mut faces = lateral;
    for (end, z, sign) in [(0usize, 0.0, -1.0), (m, len, 1.0)] {
        let outer_r = r * flare_factor(p.flare, z, r);
        let rings_in = ((outer_r / spacing).round() as usize).max(1);
        let mut prev = rings[end].clone();
        let mut prev_off = 0.5 * end as f64;
        let mut prev_n = n_theta;
        let mut cap = Vec::new();
        for j in 1..rings_in {
            let frac = (rings_in - j) as f64 / rings_in as f64;
            let n = ((n_theta as f64 * frac).round() as usize).max(6);
            let off = 0.37 * j as f64;
            let dth = 2.0 * PI / n as f64;
            let ring: Vec<usize> = (0..n)
                .map(|i| {
                    let th = (i as f64 + off) * dth;
                    let rr = radius_at(th, z) * frac;
                    pts.push(Point3::new(rr * th.cos(), rr * th.sin(), z));
                    pts.len() - 1
                })
                .collect();
            let (po, pn) = (prev_off, prev_n);
            cap.extend(stitch(&prev, |i| (i as f64 + po) * 2.0 * PI / pn as f64, &ring, |i| (i as f64 + off) * dth));
            prev = ring;
            prev_off = off;
            prev_n = n;
        }
        pts.push(Point3::new(0.0, 0.0, z));
        let center = pts.len() - 1;
        for i in 0..prev.len() {
            cap.push([prev[i], prev[(i + 1) % prev.len()], center]);
        }
        orient_by(&mut cap, &pts, |_| Vector3::new(0.0, 0.0, sign));
        faces.extend(cap);
    }

    // Break the exact cospherical ties between rings.
    let jitter = 1e-5 * spacing;
    for q in pts.iter_mut() {
        *q += Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * jitter;
        if q.z < 0.0 || q.z > len {
            q.z = q.z.clamp(0.0, len);
        }
    }
    let mesh = TriangleMesh::new(pts, faces, "cylinder")?;
    let analytic_volume = (p.noise == 0.0).then(|| {
        // Simpson over the flare profile.
        let n = 2000;
        let h = len / n as f64;
        let f = |z: f64| PI * (r * flare_factor(p.flare, z, r)).powi(2);
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * f(i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    });
    Ok(Fixture {
        mesh,
        truth: GroundTruth {
            centerlines: vec![vec![Point3::origin(), Point3::new(0.0, 0.0, len)]],
            parents: vec![None],
            radii: vec![r],
            junctions: Vec::new(),
            tips: vec![Point3::new(0.0, 0.0, len)],
            analytic_volume,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct YTubeParams {
    pub trunk_radius: f64,
    pub branch_radius: f64,
    pub trunk_length: f64,
    pub branch_length: f64,
    /// Angle of each arm from the trunk direction, in degrees.
    pub branch_angle: f64,
    pub noise: f64,
    pub flare: f64,
    /// Grid cells per branch radius for surface extraction.
    pub resolution: f64,
    /// Rotation of the arm plane about the trunk, in degrees; drawn from the
    /// seed when absent.
    pub azimuth: Option<f64>,
}

impl Default for YTubeParams {
    fn default() -> Self {
        YTubeParams {
            trunk_radius: 1.0,
            branch_radius: 0.6,
            trunk_length: 5.0,
            branch_length: 4.0,
            branch_angle: 35.0,
            noise: 0.0,
            flare: 0.2,
            resolution: 3.0,
            azimuth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThreeLevelParams {
    pub trunk_radius: f64,
    /// Child radius over parent radius.
    pub radius_ratio: f64,
    pub trunk_length: f64,
    /// Child length over parent length.
    pub length_ratio: f64,
    pub branch_angle: f64,
    pub noise: f64,
    pub flare: f64,
    pub resolution: f64,
}

impl Default for ThreeLevelParams {
    fn default() -> Self {
        ThreeLevelParams {
            trunk_radius: 1.0,
            radius_ratio: 0.7,
            trunk_length: 4.0,
            length_ratio: 0.85,
            branch_angle: 35.0,
            noise: 0.0,
            flare: 0.2,
            resolution: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Capsule {
    a: Point3,
    b: Point3,
    radius: f64,
    flare: f64,
}

impl Capsule {
    /// Signed distance to the sphere sweep along `a → b`. A flared tube
    /// widens linearly over its first two radii.
    fn eval(&self, p: &Point3) -> f64 {
        if self.flare == 0.0 {
            return round_cone(p, &self.a, &self.b, self.radius, self.radius);
        }
        let ab = self.b - self.a;
        let len = ab.norm();
        let neck = (2.0 * self.radius).min(0.5 * len);
        let m = self.a + ab * (neck / len);
        round_cone(p, &self.a, &m, self.max_radius(), self.radius).min(round_cone(p, &m, &self.b, self.radius, self.radius))
    }

    fn max_radius(&self) -> f64 {
        self.radius * (1.0 + self.flare)
    }
}

/// Exact distance to the convex hull of two spheres (after I. Quilez).
fn round_cone(p: &Point3, a: &Point3, b: &Point3, r1: f64, r2: f64) -> f64 {
    let ba = b - a;
    let l2 = ba.norm_squared();
    let rr = r1 - r2;
    let a2 = l2 - rr * rr;
    let il2 = 1.0 / l2;
    let pa = p - a;
    let y = pa.dot(&ba);
    let z = y - l2;
    let x2 = (pa * l2 - ba * y).norm_squared();
    let y2 = y * y * l2;
    let z2 = z * z * l2;
    let k = rr.signum() * rr * rr * x2;
    if z.signum() * a2 * z2 > k {
        (x2 + z2).sqrt() * il2 - r2
    } else if y.signum() * a2 * y2 < k {
        (x2 + y2).sqrt() * il2 - r1
    } else {
        ((x2 * a2 * il2).sqrt() + y * rr) * il2 - r1
    }
}

fn smin(a: f64, b: f64, k: f64) -> f64 {
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * k * 0.25
}

struct TubeTree {
    capsules: Vec<Capsule>,
    parents: Vec<Option<usize>>,
    noise: f64,
}

fn segment_distance(p1: &Point3, q1: &Point3, p2: &Point3, q2: &Point3) -> f64 {
    // Ericson, Real-Time Collision Detection, 5.1.9.
    let (d1, d2, r) = (q1 - p1, q2 - p2, p1 - p2);
    let (a, e, f) = (d1.norm_squared(), d2.norm_squared(), d2.dot(&r));
    let c = d1.dot(&r);
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > 0.0 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

impl TubeTree {
    /// Rejects layouts where tubes that are not joined could touch.
    fn check_clearance(&self) -> Result<()> {
        let n = self.capsules.len();
        let slack = 1.0 + 2.0 * self.noise;
        for i in 0..n {
            for j in (i + 1)..n {
                let (ci, cj) = (&self.capsules[i], &self.capsules[j]);
                let joined = self.parents[j] == Some(i) || self.parents[i] == Some(j);
                let siblings = self.parents[i] == self.parents[j] && self.parents[i].is_some();
                let (ri, rj) = (ci.max_radius() * slack, cj.max_radius() * slack);
                if joined {
                    continue;
                }
                if siblings {
                    // Compare the parts beyond the shared junction blob.
                    let off = 2.0 * (ri + rj);
                    let (ui, uj) = ((ci.b - ci.a).normalize(), (cj.b - cj.a).normalize());
                    if (ci.b - ci.a).norm() <= off || (cj.b - cj.a).norm() <= off {
                        return Err(Error::InvalidParameter("branches too short for their radii".into()));
                    }
                    let d = segment_distance(&(ci.a + ui * off), &ci.b, &(cj.a + uj * off), &cj.b);
                    if d <= ri + rj {
                        return Err(Error::InvalidParameter(format!("sibling branches {i} and {j} collide")));
                    }
                    continue;
                }
                if segment_distance(&ci.a, &ci.b, &cj.a, &cj.b) <= ri + rj {
                    return Err(Error::InvalidParameter(format!("branches {i} and {j} collide")));
                }
            }
        }
        Ok(())
    }

    fn truth(&self) -> GroundTruth {
        let n = self.capsules.len();
        let has_child: Vec<bool> = (0..n).map(|i| self.parents.contains(&Some(i))).collect();
        GroundTruth {
            centerlines: self.capsules.iter().map(|c| vec![c.a, c.b]).collect(),
            parents: self.parents.clone(),
            radii: self.capsules.iter().map(|c| c.radius).collect(),
            junctions: (0..n).filter(|&i| has_child[i]).map(|i| self.capsules[i].b).collect(),
            tips: (0..n).filter(|&i| !has_child[i]).map(|i| self.capsules[i].b).collect(),
            analytic_volume: None,
        }
    }

    fn mesh(&self, resolution: f64, seed: u64, label: &str) -> Result<TriangleMesh> {
        let min_r = self.capsules.iter().map(|c| c.radius).fold(f64::INFINITY, f64::min);
        let h = min_r / resolution;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70be);
        let noise = Noise::new(&mut rng, 1.2 / self.capsules[0].radius);
        let blend = 0.3 * min_r;
        let field = |p: &Point3| {
            let mut best = (f64::INFINITY, 0.0);
            let mut d = f64::INFINITY;
            for c in &self.capsules {
                let e = c.eval(p);
                d = if d.is_infinite() { e } else { smin(d, e, blend) };
                if e < best.0 {
                    best = (e, c.radius);
                }
            }
            d - self.noise * best.1 * noise.at(p)
        };
        let mut bb = Aabb::empty();
        for c in &self.capsules {
            bb.grow(&c.a);
            bb.grow(&c.b);
        }
        let pad = self.capsules.iter().map(|c| c.max_radius()).fold(0.0, f64::max) * (1.0 + self.noise) + 2.0 * h;
        bb.min -= Vector3::repeat(pad);
        bb.max += Vector3::repeat(pad);
        let raw = marching_tetrahedra(&bb, h, &field, label)?;
        relax_onto(&raw, &field, h, RELAX_ITERATIONS)
    }
}

const RELAX_ITERATIONS: usize = 6;

/// Umbrella smoothing of the vertices, each round followed by a projection
/// back onto the zero set of `field`. Connectivity is unchanged.
pub fn relax_onto(mesh: &TriangleMesh, field: impl Fn(&Point3) -> f64, h: f64, iterations: usize) -> Result<TriangleMesh> {
    let n = mesh.vertices().len();
    let mut ring: Vec<Vec<usize>> = vec![Vec::new(); n];
    for f in mesh.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            ring[a].push(b);
            ring[b].push(a);
        }
    }
    for r in &mut ring {
        r.sort_unstable();
        r.dedup();
    }
    let e = 1e-4 * h;
    let project = |mut p: Point3| {
        for _ in 0..4 {
            let v = field(&p);
            let g = Vector3::new(
                field(&(p + Vector3::x() * e)) - field(&(p - Vector3::x() * e)),
                field(&(p + Vector3::y() * e)) - field(&(p - Vector3::y() * e)),
                field(&(p + Vector3::z() * e)) - field(&(p - Vector3::z() * e)),
            ) / (2.0 * e);
            let g2 = g.norm_squared();
            if !(g2 > 1e-12) {
                break;
            }
            let step = g * (v / g2);
            let len = step.norm();
            p -= if len > 0.5 * h { step * (0.5 * h / len) } else { step };
            if v.abs() < 1e-9 * h {
                break;
            }
        }
        p
    };
    let mut pts = mesh.vertices().to_vec();
    for _ in 0..iterations {
        pts = (0..n)
            .map(|v| {
                let c = ring[v].iter().fold(Vector3::zeros(), |acc, &u| acc + pts[u].coords) / ring[v].len() as f64;
                project(Point3::from(c))
            })
            .collect();
    }
    TriangleMesh::new(pts, mesh.faces().to_vec(), mesh.label())
}

/// Kuhn split of each grid cube into six tetrahedra sharing the main
/// diagonal; conforming across neighbouring cubes.
const KUHN: [[usize; 4]; 6] = [[0, 1, 3, 7], [0, 1, 5, 7], [0, 2, 3, 7], [0, 2, 6, 7], [0, 4, 5, 7], [0, 4, 6, 7]];

/// Zero level set of `field` (negative inside) on a grid of spacing `h`.
/// Crossing points are clamped to the middle 80% of each grid edge and
/// nudged off it by a millionth of the spacing.
pub fn marching_tetrahedra(bounds: &Aabb, h: f64, field: &impl Fn(&Point3) -> f64, label: &str) -> Result<TriangleMesh> {
    check_positive("grid spacing", h)?;
    let dims = [0, 1, 2].map(|a| ((bounds.max[a] - bounds.min[a]) / h).ceil() as usize + 1);
    let id = |i: usize, j: usize, k: usize| (k * dims[1] + j) * dims[0] + i;
    let pos = |i: usize, j: usize, k: usize| bounds.min + Vector3::new(i as f64, j as f64, k as f64) * h;
    let mut values = vec![0.0; dims[0] * dims[1] * dims[2]];
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let v = field(&pos(i, j, k));
                values[id(i, j, k)] = if v == 0.0 { 1e-12 } else { v };
            }
        }
    }
    let coords = |g: usize| {
        let i = g % dims[0];
        let j = (g / dims[0]) % dims[1];
        let k = g / (dims[0] * dims[1]);
        pos(i, j, k)
    };
    let mut pts: Vec<Point3> = Vec::new();
    let mut edge_pt: HashMap<(usize, usize), usize> = HashMap::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut crossing = |a: usize, b: usize, pts: &mut Vec<Point3>| -> usize {
        let key = (a.min(b), a.max(b));
        *edge_pt.entry(key).or_insert_with(|| {
            let (fa, fb) = (values[key.0], values[key.1]);
            let t = (fa / (fa - fb)).clamp(0.1, 0.9);
            let (pa, pb) = (coords(key.0), coords(key.1));
            pts.push(pa + (pb - pa) * t + edge_jitter(key) * (1e-6 * h));
            pts.len() - 1
        })
    };
    for k in 0..dims[2] - 1 {
        for j in 0..dims[1] - 1 {
            for i in 0..dims[0] - 1 {
                let corner = |c: usize| id(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                for tet in KUHN {
                    let g = tet.map(corner);
                    let inside: Vec<usize> = g.iter().copied().filter(|&v| values[v] < 0.0).collect();
                    let outside: Vec<usize> = g.iter().copied().filter(|&v| values[v] > 0.0).collect();
                    let mut tris: Vec<[usize; 3]> = Vec::new();
                    match inside.len() {
                        1 | 3 => {
                            let (lone, others) = if inside.len() == 1 { (inside[0], &outside) } else { (outside[0], &inside) };
                            let e = others.iter().map(|&o| crossing(lone, o, &mut pts)).collect::<Vec<_>>();
                            tris.push([e[0], e[1], e[2]]);
                        }
                        2 => {
                            let (a, b) = (inside[0], inside[1]);
                            let (c, d) = (outside[0], outside[1]);
                            let ac = crossing(a, c, &mut pts);
                            let ad = crossing(a, d, &mut pts);
                            let bd = crossing(b, d, &mut pts);
                            let bc = crossing(b, c, &mut pts);
                            tris.push([ac, ad, bd]);
                            tris.push([ac, bd, bc]);
                        }
                        _ => {}
                    }
                    if tris.is_empty() {
                        continue;
                    }
                    let mean = |s: &[usize]| geom::centroid(&s.iter().map(|&v| coords(v)).collect::<Vec<_>>());
                    let dir = mean(&outside) - mean(&inside);
                    for mut t in tris {
                        let [a, b, c] = t.map(|v| pts[v]);
                        if (b - a).cross(&(c - a)).dot(&dir) < 0.0 {
                            t.swap(1, 2);
                        }
                        faces.push(t);
                    }
                }
            }
        }
    }
    TriangleMesh::new(pts, faces, label)
}

/// Deterministic offset in [-1, 1]^3 keyed by a grid edge; breaks the exact
/// coplanarity of crossing points on shared grid planes.
fn edge_jitter(key: (usize, usize)) -> Vector3 {
    let mut x = (key.0 as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (key.1 as u64).wrapping_add(0x632b_e59b_d9b4_e019);
    let mut next = || {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    };
    Vector3::new(next(), next(), next())
}

fn rotate_about_z(v: Vector3, angle: f64) -> Vector3 {
    let (s, c) = angle.sin_cos();
    Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

/// Unit direction at `angle` from `axis`, in the plane spanned by `axis`
/// and `side`.
fn tilt(axis: &Vector3, side: &Vector3, angle: f64) -> Vector3 {
    (axis * angle.cos() + side * angle.sin()).normalize()
}

fn y_tube(p: &YTubeParams, seed: u64) -> Result<Fixture> {
    for (n, v) in [
        ("trunk_radius", p.trunk_radius),
        ("branch_radius", p.branch_radius),
        ("trunk_length", p.trunk_length),
        ("branch_length", p.branch_length),
        ("resolution", p.resolution),
    ] {
        check_positive(n, v)?;
    }
    check_noise(p.noise)?;
    if p.branch_radius >= p.trunk_radius {
        return Err(Error::InvalidParameter("branch radius must be smaller than the trunk radius".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let azimuth = p.azimuth.map_or_else(|| rng.gen_range(0.0..PI), f64::to_radians);
    let junction = Point3::new(0.0, 0.0, p.trunk_length);
    let z = Vector3::z();
    let side = rotate_about_z(Vector3::x(), azimuth);
    let ang = p.branch_angle.to_radians();
    let capsules = vec![
        Capsule { a: Point3::origin(), b: junction, radius: p.trunk_radius, flare: p.flare },
        Capsule { a: junction, b: junction + tilt(&z, &side, ang) * p.branch_length, radius: p.branch_radius, flare: 0.0 },
        Capsule { a: junction, b: junction + tilt(&z, &side, -ang) * p.branch_length, radius: p.branch_radius, flare: 0.0 },
    ];
    let tree = TubeTree { capsules, parents: vec![None, Some(0), Some(0)], noise: p.noise };
    tree.check_clearance()?;
    let mesh = tree.mesh(p.resolution, seed, "y_tube")?;
    Ok(Fixture { mesh, truth: tree.truth() })
}

fn three_level_tree(p: &ThreeLevelParams, seed: u64) -> Result<Fixture> {
    for (n, v) in [
        ("trunk_radius", p.trunk_radius),
        ("radius_ratio", p.radius_ratio),
        ("trunk_length", p.trunk_length),
        ("length_ratio", p.length_ratio),
        ("resolution", p.resolution),
    ] {
        check_positive(n, v)?;
    }
    check_noise(p.noise)?;
    if p.radius_ratio >= 1.0 {
        return Err(Error::InvalidParameter("branch radii must shrink from level to level".into()));
    }
    let ang = p.branch_angle.to_radians();
    let mut capsules =
        vec![Capsule { a: Point3::origin(), b: Point3::new(0.0, 0.0, p.trunk_length), radius: p.trunk_radius, flare: p.flare }];
    let mut parents = vec![None];
    let mut frontier = vec![(0usize, Vector3::z(), Vector3::x())];
    for level in 1..3 {
        let mut next = Vec::new();
        for (parent, dir, side) in frontier {
            let pc = capsules[parent];
            let radius = pc.radius * p.radius_ratio;
            let length = (pc.b - pc.a).norm() * p.length_ratio;
            for sign in [1.0, -1.0] {
                let d = tilt(&dir, &side, sign * ang);
                capsules.push(Capsule { a: pc.b, b: pc.b + d * length, radius, flare: 0.0 });
                parents.push(Some(parent));
                // Alternate the branching plane between levels.
                next.push((capsules.len() - 1, d, d.cross(&side).normalize()));
            }
        }
        frontier = next;
        let _ = level;
    }
    let tree = TubeTree { capsules, parents, noise: p.noise };
    tree.check_clearance()?;
    let mesh = tree.mesh(p.resolution, seed, "three_level_tree")?;
    Ok(Fixture { mesh, truth: tree.truth() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxParams {
    pub min: [f64; 3],
    pub max: [f64; 3],
    /// Grid divisions along the longest side.
    pub divisions: usize,
}

impl Default for BoxParams {
    fn default() -> Self {
        BoxParams { min: [1.5, -2.0, 0.0], max: [4.0, 2.0, 10.0], divisions: 12 }
    }
}

fn box_fixture(p: &BoxParams) -> Result<Fixture> {
    let (lo, hi) = (Point3::from(p.min), Point3::from(p.max));
    let ext = hi - lo;
    for a in 0..3 {
        check_positive("box extent", ext[a])?;
    }
    if p.divisions == 0 {
        return Err(Error::InvalidParameter("divisions must be positive".into()));
    }
    let n = [0, 1, 2].map(|a| ((p.divisions as f64 * ext[a] / ext.max()).round() as usize).max(1));
    let mut pts = Vec::new();
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vid = |g: [usize; 3], pts: &mut Vec<Point3>| {
        *index.entry(g).or_insert_with(|| {
            pts.push(
                lo + Vector3::new(ext.x * g[0] as f64 / n[0] as f64, ext.y * g[1] as f64 / n[1] as f64, ext.z * g[2] as f64 / n[2] as f64),
            );
            pts.len() - 1
        })
    };
    let mut faces = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, n[axis]] {
            for i in 0..n[u] {
                for j in 0..n[v] {
                    let g = |di: usize, dj: usize| {
                        let mut c = [0; 3];
                        c[axis] = side;
                        c[u] = i + di;
                        c[v] = j + dj;
                        c
                    };
                    let q = [g(0, 0), g(1, 0), g(1, 1), g(0, 1)].map(|c| vid(c, &mut pts));
                    let mut t1 = [q[0], q[1], q[2]];
                    let mut t2 = [q[0], q[2], q[3]];
                    let outward = if side == 0 { -1.0 } else { 1.0 };
                    for t in [&mut t1, &mut t2] {
                        let [a, b, c] = t.map(|k| pts[k]);
                        if (b - a).cross(&(c - a))[axis] * outward < 0.0 {
                            t.swap(1, 2);
                        }
                    }
                    faces.push(t1);
                    faces.push(t2);
                }
            }
        }
    }
    let mesh = TriangleMesh::new(pts, faces, "box")?;
    Ok(Fixture {
        mesh,
        truth: GroundTruth {
            centerlines: Vec::new(),
            parents: Vec::new(),
            radii: Vec::new(),
            junctions: Vec::new(),
            tips: Vec::new(),
            analytic_volume: Some(ext.x * ext.y * ext.z),
        },
    })
}

/// A tree sampled along the ground-truth centerlines at roughly `spacing`,
/// rooted at the start of the first centerline. Also returns, per
/// centerline, the node ids along it (excluding its start node).
pub fn centerline_tree(truth: &GroundTruth, spacing: f64) -> Result<(SkeletonTree, Vec<Vec<NodeId>>)> {
    check_positive("spacing", spacing)?;
    let first = truth.centerlines.first().ok_or_else(|| Error::InvalidParameter("no centerlines".into()))?;
    let mut tree = SkeletonTree::with_root(0, first[0], LinkMetric::Euclidean, 0.0);
    let mut next_id = 1;
    let mut end_node: Vec<NodeId> = vec![0; truth.centerlines.len()];
    let mut members = vec![Vec::new(); truth.centerlines.len()];
    for (ci, line) in truth.centerlines.iter().enumerate() {
        let mut prev = match truth.parents[ci] {
            None => 0,
            Some(p) if p < ci => end_node[p],
            Some(_) => return Err(Error::InvalidParameter("centerlines must follow their parents".into())),
        };
        for w in line.windows(2) {
            let steps = (((w[1] - w[0]).norm() / spacing).round() as usize).max(1);
            for s in 1..=steps {
                let q = w[0] + (w[1] - w[0]) * (s as f64 / steps as f64);
                let wgt = (q - tree.position(prev)).norm();
                tree.add_child(prev, next_id, q, wgt)?;
                members[ci].push(next_id);
                prev = next_id;
                next_id += 1;
            }
        }
        end_node[ci] = prev;
    }
    Ok((tree, members))
}

/// Attaches `count` offshoots of `nodes` nodes each at distinct interior
/// nodes of the centerline chains, between 20% and 70% along each chain.
/// Returns the node ids of every hair.
pub fn inject_hairs(
    tree: &mut SkeletonTree,
    members: &[Vec<NodeId>],
    count: usize,
    nodes: usize,
    spacing: f64,
    seed: u64,
) -> Result<Vec<Vec<NodeId>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4a1f);
    let mut candidates: Vec<NodeId> = Vec::new();
    for chain in members {
        let n = chain.len();
        for (k, &v) in chain.iter().enumerate() {
            let f = (k + 1) as f64 / n as f64;
            if (0.2..=0.7).contains(&f) && tree.degree(v) == 2 {
                candidates.push(v);
            }
        }
    }
    if candidates.len() < count {
        return Err(Error::InvalidParameter(format!("only {} attachment sites for {count} hairs", candidates.len())));
    }
    let mut next_id = tree.ids().max().unwrap() + 1;
    let mut hairs = Vec::with_capacity(count);
    let mut used = std::collections::HashSet::new();
    while hairs.len() < count {
        let at = candidates[rng.gen_range(0..candidates.len())];
        let parent = tree.parent(at).unwrap();
        // Hairs on neighbouring nodes would merge into one subtree.
        if used.contains(&at) || used.contains(&parent) || tree.children(at).iter().any(|c| used.contains(c)) {
            continue;
        }
        used.insert(at);
        let along = (tree.position(at) - tree.position(parent)).normalize();
        let helper = if along.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let side = rotate_in_plane(along.cross(&helper).normalize(), along, rng.gen_range(0.0..2.0 * PI));
        let mut prev = at;
        let mut hair = Vec::with_capacity(nodes);
        for _ in 0..nodes {
            let q = tree.position(prev) + side * spacing;
            tree.add_child(prev, next_id, q, spacing)?;
            hair.push(next_id);
            prev = next_id;
            next_id += 1;
        }
        hairs.push(hair);
    }
    Ok(hairs)
}

/// Rotates `v` (perpendicular to the unit `axis`) by `angle` about `axis`.
fn rotate_in_plane(v: Vector3, axis: Vector3, angle: f64) -> Vector3 {
    let w = axis.cross(&v);
    v * angle.cos() + w * angle.sin()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylinder_topology_and_counts() {
        let f = generate_fixture(&FixtureSpec::Cylinder(CylinderParams::default()), 1).unwrap();
        assert_eq!(f.mesh.euler_characteristic(), 2);
        let faces = f.mesh.faces().len();
        assert!((1500..2600).contains(&faces), "{faces} faces");
        let v = f.mesh.signed_volume();
        let exact = PI * 10.0;
        assert!(v < exact && v > 0.97 * exact, "volume {v}");
    }

    #[test]
    fn fixtures_are_deterministic() {
        let spec = FixtureSpec::YTube(YTubeParams { noise: 0.05, ..Default::default() });
        let a = generate_fixture(&spec, 4).unwrap();
        let b = generate_fixture(&spec, 4).unwrap();
        assert_eq!(a.mesh.vertices(), b.mesh.vertices());
        assert_eq!(a.mesh.faces(), b.mesh.faces());
    }

    #[test]
    fn y_tube_is_closed_sphere() {
        let f = generate_fixture(&FixtureSpec::YTube(YTubeParams::default()), 0).unwrap();
        assert_eq!(f.mesh.euler_characteristic(), 2);
        assert_eq!(f.truth.junctions, vec![Point3::new(0.0, 0.0, 5.0)]);
        assert_eq!(f.truth.tips.len(), 2);
    }

    #[test]
    fn colliding_branches_are_rejected() {
        let spec = FixtureSpec::YTube(YTubeParams { branch_angle: 3.0, ..Default::default() });
        assert!(matches!(generate_fixture(&spec, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn box_volume() {
        let f = generate_fixture(&FixtureSpec::Box(BoxParams::default()), 0).unwrap();
        assert!((f.mesh.signed_volume() - f.truth.analytic_volume.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn centerline_tree_with_hairs() {
        let f = generate_fixture(&FixtureSpec::ThreeLevelTree(ThreeLevelParams::default()), 0);
        let truth = f.unwrap().truth;
        assert_eq!(truth.centerlines.len(), 7);
        assert_eq!(truth.tips.len(), 4);
        let (mut t, members) = centerline_tree(&truth, 0.1).unwrap();
        let before = t.len();
        let hairs = inject_hairs(&mut t, &members, 10, 3, 0.1, 1).unwrap();
        assert_eq!(t.len(), before + 30);
        assert_eq!(t.leaves().len(), 4 + hairs.len());
        t.check_invariants().unwrap();
    }
}
