//! Geometric primitives and predicates.
//!
//! Orientation and in-sphere tests go through Shewchuk's adaptive exact
//! predicates. Signs here follow the convention used by every cell in this
//! crate: a tetrahedron `(a, b, c, d)` is positively oriented when
//! `(b - a) · ((c - a) × (d - a)) > 0`.

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

#[inline]
fn coord(p: &Point3) -> robust::Coord3D<f64> {
    robust::Coord3D { x: p.x, y: p.y, z: p.z }
}

/// Exact sign of the signed volume of `(a, b, c, d)`: positive when `d` lies
/// on the side of triangle `abc` its right-hand normal points to.
#[inline]
pub fn orient(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> f64 {
    -robust::orient3d(coord(a), coord(b), coord(c), coord(d))
}

/// Exact in-sphere test for a positively oriented tetrahedron: positive when
/// `e` lies strictly inside the circumsphere of `(a, b, c, d)`.
#[inline]
pub fn in_sphere(a: &Point3, b: &Point3, c: &Point3, d: &Point3, e: &Point3) -> f64 {
    -robust::insphere(coord(a), coord(b), coord(c), coord(d), coord(e))
}

pub fn signed_volume(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> f64 {
    (b - a).dot(&(c - a).cross(&(d - a))) / 6.0
}

pub fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

pub fn centroid(points: &[Point3]) -> Point3 {
    let mut sum = Vector3::zeros();
    for p in points {
        sum += p.coords;
    }
    Point3::from(sum / points.len() as f64)
}

/// Circumcenter and circumradius of a tetrahedron. Returns `None` when the
/// tetrahedron is flat.
pub fn circumsphere(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> Option<(Point3, f64)> {
    let ab = b - a;
    let ac = c - a;
    let ad = d - a;
    let denom = 2.0 * ab.dot(&ac.cross(&ad));
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    let offset = (ac.cross(&ad) * ab.norm_squared() + ad.cross(&ab) * ac.norm_squared() + ab.cross(&ac) * ad.norm_squared()) / denom;
    if !offset.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some((a + offset, offset.norm()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn diagonal(&self) -> f64 {
        if self.min.x > self.max.x {
            return 0.0;
        }
        (self.max - self.min).norm()
    }

    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }
}

/// Result of testing a segment against a triangle with exact predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    None,
    Proper,
    /// The segment touches the triangle's plane at an endpoint, or passes
    /// through an edge or vertex; the parity contribution is ambiguous.
    Degenerate,
}

/// Classifies how the segment `p → q` meets triangle `abc`.
pub fn segment_crosses_triangle(p: &Point3, q: &Point3, a: &Point3, b: &Point3, c: &Point3) -> Crossing {
    let sp = orient(a, b, c, p);
    let sq = orient(a, b, c, q);
    if (sp > 0.0 && sq > 0.0) || (sp < 0.0 && sq < 0.0) {
        return Crossing::None;
    }
    if sp == 0.0 && sq == 0.0 {
        // Coplanar segment: only ambiguous if it actually overlaps the triangle,
        // which a cheap bounding test cannot rule out, so report it.
        return Crossing::Degenerate;
    }
    let e0 = orient(p, q, a, b);
    let e1 = orient(p, q, b, c);
    let e2 = orient(p, q, c, a);
    let all_pos = e0 > 0.0 && e1 > 0.0 && e2 > 0.0;
    let all_neg = e0 < 0.0 && e1 < 0.0 && e2 < 0.0;
    let any_pos = e0 > 0.0 || e1 > 0.0 || e2 > 0.0;
    let any_neg = e0 < 0.0 || e1 < 0.0 || e2 < 0.0;
    if any_pos && any_neg {
        return Crossing::None;
    }
    if (all_pos || all_neg) && sp != 0.0 && sq != 0.0 {
        Crossing::Proper
    } else {
        Crossing::Degenerate
    }
}

/// Squared distance from `p` to the closest point of triangle `abc`.
pub fn point_triangle_distance_squared(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> f64 {
    // Ericson, Real-Time Collision Detection, 5.1.5.
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm_squared();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm_squared();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (ap - ab * v).norm_squared();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm_squared();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (ap - ac * w).norm_squared();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - (c - b) * w).norm_squared();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - ab * v - ac * w).norm_squared()
}

/// Norm of the difference between consecutive unit link directions at `p2`:
/// `‖u₂₃ − u₁₂‖`. For uniform samples of spacing `l` on a circle of radius
/// `r` this equals `l / r`.
pub fn discrete_curvature(p1: &Point3, p2: &Point3, p3: &Point3) -> crate::Result<f64> {
    let u12 = p2 - p1;
    let u23 = p3 - p2;
    let (n12, n23) = (u12.norm(), u23.norm());
    if n12 == 0.0 || n23 == 0.0 || (p3 - p1).norm() == 0.0 {
        return Err(crate::Error::InvalidParameter("discrete curvature needs three distinct points".into()));
    }
    Ok((u23 / n23 - u12 / n12).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    #[test]
    fn orientation_matches_signed_volume() {
        let (a, b, c, d) = (p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(0., 0., 1.));
        assert!(signed_volume(&a, &b, &c, &d) > 0.0);
        assert!(orient(&a, &b, &c, &d) > 0.0);
        assert!(orient(&a, &c, &b, &d) < 0.0);
        assert_eq!(orient(&a, &b, &c, &p(3., 4., 0.)), 0.0);
    }

    #[test]
    fn in_sphere_sign() {
        let (a, b, c, d) = (p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(0., 0., 1.));
        assert!(in_sphere(&a, &b, &c, &d, &p(0.25, 0.25, 0.25)) > 0.0);
        assert!(in_sphere(&a, &b, &c, &d, &p(5., 5., 5.)) < 0.0);
        assert_eq!(in_sphere(&a, &b, &c, &d, &p(1., 1., 1.)), 0.0);
    }

    #[test]
    fn circumsphere_is_equidistant() {
        let pts = [p(0.1, 0., 0.3), p(1., 0.2, 0.), p(0., 1.3, 0.1), p(0.2, 0.1, 1.)];
        let (c, r) = circumsphere(&pts[0], &pts[1], &pts[2], &pts[3]).unwrap();
        for q in &pts {
            assert!(((q - c).norm() - r).abs() < 1e-12);
        }
        assert!(circumsphere(&p(0., 0., 0.), &p(1., 0., 0.), &p(0., 1., 0.), &p(1., 1., 0.)).is_none());
    }

    #[test]
    fn segment_triangle_cases() {
        let (a, b, c) = (p(0., 0., 0.), p(2., 0., 0.), p(0., 2., 0.));
        let cross = segment_crosses_triangle(&p(0.5, 0.5, -1.), &p(0.5, 0.5, 1.), &a, &b, &c);
        assert_eq!(cross, Crossing::Proper);
        let miss = segment_crosses_triangle(&p(3., 3., -1.), &p(3., 3., 1.), &a, &b, &c);
        assert_eq!(miss, Crossing::None);
        let edge = segment_crosses_triangle(&p(1., 0., -1.), &p(1., 0., 1.), &a, &b, &c);
        assert_eq!(edge, Crossing::Degenerate);
        let short = segment_crosses_triangle(&p(0.5, 0.5, 1.), &p(0.5, 0.5, 2.), &a, &b, &c);
        assert_eq!(short, Crossing::None);
    }

    #[test]
    fn point_triangle_distance_regions() {
        let (a, b, c) = (p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.));
        assert!((point_triangle_distance_squared(&p(0.2, 0.2, 1.), &a, &b, &c) - 1.0).abs() < 1e-15);
        assert!((point_triangle_distance_squared(&p(-1., 0., 0.), &a, &b, &c) - 1.0).abs() < 1e-15);
        assert!((point_triangle_distance_squared(&p(1., 1., 0.), &a, &b, &c) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn curvature_of_collinear_and_right_angle() {
        let k = discrete_curvature(&p(0., 0., 0.), &p(1., 0., 0.), &p(2., 0., 0.)).unwrap();
        assert_eq!(k, 0.0);
        let k = discrete_curvature(&p(0., 0., 0.), &p(1., 0., 0.), &p(1., 1., 0.)).unwrap();
        assert!((k - 2f64.sqrt()).abs() < 1e-15);
        assert!(discrete_curvature(&p(0., 0., 0.), &p(0., 0., 0.), &p(1., 0., 0.)).is_err());
    }
}
