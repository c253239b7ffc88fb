//! Planar polyline paths parametrized by arc length.
//!
//! Every risk model works on top of these primitives: evaluating a path at an
//! arc length, cutting a path to a horizon, the exact minimum distance between
//! two polylines and the first crossing of two paths.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for intersection and degeneracy tests, in meters.
pub const GEOM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> f64 {
        (other - self).norm()
    }

    pub fn lerp(self, other: Self, t: f64) -> Self {
        self + (other - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Self) -> Self {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Self) -> Self {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Self {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Point2::new(x, y)
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("path needs at least two vertices, got {0}")]
    TooFewVertices(usize),
    #[error("non-finite coordinate at vertex {0}")]
    NonFinite(usize),
    #[error("zero-length segment starting at vertex {0}")]
    DegenerateSegment(usize),
}

/// An open polyline with its cumulative arc length table.
///
/// Vertex 0 is arc length 0 and, for agent paths, the agent's current position.
#[derive(Debug, Clone, PartialEq)]
pub struct PolylinePath {
    vertices: Vec<Point2>,
    cumulative: Vec<f64>,
}

impl PolylinePath {
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() < 2 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        let mut cumulative = Vec::with_capacity(vertices.len());
        cumulative.push(0.0);
        let mut total = 0.0;
        for (i, w) in vertices.windows(2).enumerate() {
            let len = w[0].distance(w[1]);
            if len <= GEOM_TOL {
                return Err(GeometryError::DegenerateSegment(i));
            }
            total += len;
            cumulative.push(total);
        }
        Ok(Self {
            vertices,
            cumulative,
        })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn cumulative_arclen(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("at least two vertices")
    }

    pub fn start(&self) -> Point2 {
        self.vertices[0]
    }

    pub fn end(&self) -> Point2 {
        *self.vertices.last().expect("at least two vertices")
    }

    pub fn segment_count(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Index of the segment containing arc length `m` (already clamped).
    fn segment_index(&self, m: f64) -> usize {
        let i = self.cumulative.partition_point(|&c| c <= m);
        i.saturating_sub(1).min(self.segment_count() - 1)
    }

    /// Position at arc length `m`, clamped to `[0, length]`.
    pub fn point_at(&self, m: f64) -> Point2 {
        if !(m > 0.0) {
            return self.start();
        }
        if m >= self.length() {
            return self.end();
        }
        let i = self.segment_index(m);
        let seg_len = self.cumulative[i + 1] - self.cumulative[i];
        let t = (m - self.cumulative[i]) / seg_len;
        self.vertices[i].lerp(self.vertices[i + 1], t)
    }

    /// Unit direction of the segment containing arc length `m`.
    pub fn tangent_at(&self, m: f64) -> Point2 {
        let i = self.segment_index(m.clamp(0.0, self.length()));
        let d = self.vertices[i + 1] - self.vertices[i];
        d * (1.0 / d.norm())
    }

    /// Closest point on the path to `p`. Ties resolve to the smallest arc length.
    pub fn project(&self, p: Point2) -> Projection {
        let mut best = Projection {
            arclen: 0.0,
            distance: f64::INFINITY,
        };
        for (i, w) in self.vertices.windows(2).enumerate() {
            let (t, d) = project_on_segment(p, w[0], w[1]);
            if d < best.distance {
                let seg_len = self.cumulative[i + 1] - self.cumulative[i];
                best = Projection {
                    arclen: self.cumulative[i] + t * seg_len,
                    distance: d,
                };
            }
        }
        best
    }

    /// Prefix of the path from arc length 0 to `min(horizon, length)`.
    pub fn cut(&self, horizon: f64) -> PathPrefix {
        if !(horizon > GEOM_TOL) {
            return PathPrefix::Point(self.start());
        }
        if horizon >= self.length() {
            return PathPrefix::Path(self.clone());
        }
        let i = self.segment_index(horizon);
        let mut vertices = self.vertices[..=i].to_vec();
        let mut cumulative = self.cumulative[..=i].to_vec();
        if self.cumulative[i + 1] - horizon <= GEOM_TOL {
            vertices.push(self.vertices[i + 1]);
            cumulative.push(self.cumulative[i + 1]);
        } else if horizon - self.cumulative[i] > GEOM_TOL {
            vertices.push(self.point_at(horizon));
            cumulative.push(horizon);
        }
        if vertices.len() < 2 {
            return PathPrefix::Point(self.start());
        }
        PathPrefix::Path(PolylinePath {
            vertices,
            cumulative,
        })
    }

    /// Segments as `(start, end)` pairs in arc length order.
    pub fn segments(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub arclen: f64,
    pub distance: f64,
}

/// Result of cutting a path to a horizon: either a real polyline or, for a
/// zero horizon, the bare start point.
#[derive(Debug, Clone, PartialEq)]
pub enum PathPrefix {
    Point(Point2),
    Path(PolylinePath),
}

impl PathPrefix {
    pub fn vertices(&self) -> &[Point2] {
        match self {
            PathPrefix::Point(p) => std::slice::from_ref(p),
            PathPrefix::Path(path) => path.vertices(),
        }
    }

    pub fn length(&self) -> f64 {
        match self {
            PathPrefix::Point(_) => 0.0,
            PathPrefix::Path(path) => path.length(),
        }
    }
}

/// Parameter of the clamped projection of `p` onto segment `a-b` and the distance to it.
fn project_on_segment(p: Point2, a: Point2, b: Point2) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return (0.0, p.distance(a));
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    (t, p.distance(a + ab * t))
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    project_on_segment(p, a, b).1
}

/// Exact minimum distance between two closed segments (either may be a point).
pub fn segment_distance(a0: Point2, a1: Point2, b0: Point2, b1: Point2) -> f64 {
    let r = a1 - a0;
    let s = b1 - b0;
    let denom = r.cross(s);
    if denom != 0.0 {
        let qp = b0 - a0;
        let t = qp.cross(s) / denom;
        let u = qp.cross(r) / denom;
        if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
            return 0.0;
        }
    }
    // Disjoint (or parallel) segments attain their minimum at an endpoint.
    point_segment_distance(a0, b0, b1)
        .min(point_segment_distance(a1, b0, b1))
        .min(point_segment_distance(b0, a0, a1))
        .min(point_segment_distance(b1, a0, a1))
}

/// Minimum distance between two vertex chains; a single vertex is a point.
pub fn chain_distance(a: &[Point2], b: &[Point2]) -> f64 {
    fn segs(v: &[Point2]) -> impl Iterator<Item = (Point2, Point2)> + Clone + '_ {
        let single = (v.len() == 1).then(|| (v[0], v[0]));
        single
            .into_iter()
            .chain(v.windows(2).map(|w| (w[0], w[1])))
    }
    let mut best = f64::INFINITY;
    for (a0, a1) in segs(a) {
        for (b0, b1) in segs(b) {
            best = best.min(segment_distance(a0, a1, b0, b1));
            if best == 0.0 {
                return 0.0;
            }
        }
    }
    best
}

/// Minimum Euclidean distance over all point pairs of the two paths.
pub fn min_path_distance(a: &PolylinePath, b: &PolylinePath) -> f64 {
    chain_distance(a.vertices(), b.vertices())
}

pub fn min_prefix_distance(a: &PathPrefix, b: &PathPrefix) -> f64 {
    chain_distance(a.vertices(), b.vertices())
}

pub fn cut_path(path: &PolylinePath, horizon: f64) -> PathPrefix {
    path.cut(horizon)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub point: Point2,
    pub arclen_ego: f64,
    pub arclen_other: f64,
}

/// Intersection of two segments as `(t, u)` parameters, earliest along `a`.
fn segment_intersection(a0: Point2, a1: Point2, b0: Point2, b1: Point2) -> Option<(f64, f64)> {
    let r = a1 - a0;
    let s = b1 - b0;
    let qp = b0 - a0;
    let r_len = r.norm();
    let s_len = s.norm();
    let denom = r.cross(s);
    if denom.abs() > GEOM_TOL * r_len * s_len {
        let t = qp.cross(s) / denom;
        let u = qp.cross(r) / denom;
        let (tol_t, tol_u) = (GEOM_TOL / r_len, GEOM_TOL / s_len);
        if t >= -tol_t && t <= 1.0 + tol_t && u >= -tol_u && u <= 1.0 + tol_u {
            return Some((t.clamp(0.0, 1.0), u.clamp(0.0, 1.0)));
        }
        return None;
    }
    // Parallel: only collinear overlaps intersect.
    if qp.cross(r).abs() > GEOM_TOL * r_len {
        return None;
    }
    let r2 = r_len * r_len;
    let t0 = qp.dot(r) / r2;
    let t1 = (b1 - a0).dot(r) / r2;
    let lo = t0.min(t1).max(0.0);
    let hi = t0.max(t1).min(1.0);
    if lo > hi + GEOM_TOL / r_len {
        return None;
    }
    let t = lo.min(1.0);
    let u = ((a0 + r * t - b0).dot(s) / (s_len * s_len)).clamp(0.0, 1.0);
    Some((t, u))
}

/// First crossing of `other` in ego arc length order, if the paths meet at all.
pub fn find_crossing(ego: &PolylinePath, other: &PolylinePath) -> Option<Crossing> {
    let ec = ego.cumulative_arclen();
    let oc = other.cumulative_arclen();
    for (i, (a0, a1)) in ego.segments().enumerate() {
        let mut best: Option<Crossing> = None;
        for (j, (b0, b1)) in other.segments().enumerate() {
            let Some((t, u)) = segment_intersection(a0, a1, b0, b1) else {
                continue;
            };
            let candidate = Crossing {
                point: a0.lerp(a1, t),
                arclen_ego: ec[i] + t * (ec[i + 1] - ec[i]),
                arclen_other: oc[j] + u * (oc[j + 1] - oc[j]),
            };
            let better = match &best {
                None => true,
                Some(b) => {
                    candidate.arclen_ego < b.arclen_ego
                        || (candidate.arclen_ego == b.arclen_ego
                            && candidate.arclen_other < b.arclen_other)
                }
            };
            if better {
                best = Some(candidate);
            }
        }
        if best.is_some() {
            return best;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(pts: &[(f64, f64)]) -> PolylinePath {
        PolylinePath::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn point_at_examples() {
        let straight = path(&[(0.0, 0.0), (10.0, 0.0)]);
        assert_eq!(straight.point_at(0.0), Point2::new(0.0, 0.0));
        assert_eq!(straight.point_at(4.0), Point2::new(4.0, 0.0));
        let l = path(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0)]);
        assert_eq!(l.point_at(6.0), Point2::new(4.0, 2.0));
        assert_eq!(l.point_at(100.0), Point2::new(4.0, 4.0));
        assert_eq!(l.point_at(-3.0), Point2::new(0.0, 0.0));
    }

    #[test]
    fn point_at_reproduces_vertices() {
        let p = path(&[(0.3, 0.1), (4.7, 0.2), (4.9, 7.3), (-2.0, 9.0)]);
        for (v, &m) in p.vertices().iter().zip(p.cumulative_arclen()) {
            assert_eq!(p.point_at(m), *v);
        }
    }

    #[test]
    fn rejects_invalid_paths() {
        assert_eq!(
            PolylinePath::new(vec![Point2::new(0.0, 0.0)]),
            Err(GeometryError::TooFewVertices(1))
        );
        assert_eq!(
            PolylinePath::new(vec![Point2::new(0.0, 0.0), Point2::new(0.0, 0.0)]),
            Err(GeometryError::DegenerateSegment(0))
        );
        assert_eq!(
            PolylinePath::new(vec![Point2::new(0.0, 0.0), Point2::new(f64::NAN, 0.0)]),
            Err(GeometryError::NonFinite(1))
        );
    }

    #[test]
    fn min_distance_examples() {
        let a = path(&[(-10.0, 0.0), (10.0, 0.0)]);
        let b = path(&[(0.0, -10.0), (0.0, 10.0)]);
        assert_eq!(min_path_distance(&a, &b), 0.0);
        let c = path(&[(-10.0, 3.5), (10.0, 3.5)]);
        assert!((min_path_distance(&a, &c) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn cut_examples() {
        let p = path(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (8.0, 4.0)]);
        assert_eq!(p.cut(12.0), PathPrefix::Path(p.clone()));
        assert_eq!(p.cut(50.0), PathPrefix::Path(p.clone()));
        assert_eq!(p.cut(0.0), PathPrefix::Point(Point2::new(0.0, 0.0)));
        let PathPrefix::Path(c) = p.cut(10.0) else {
            panic!("expected a path");
        };
        assert_eq!(c.end(), Point2::new(6.0, 4.0));
        assert!((c.length() - 10.0).abs() < 1e-12);
        assert_eq!(c.vertices()[..3], p.vertices()[..3]);
    }

    #[test]
    fn cut_at_vertex_keeps_vertex_exact() {
        let p = path(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0)]);
        let PathPrefix::Path(c) = p.cut(4.0) else {
            panic!("expected a path");
        };
        assert_eq!(c.vertices(), &[Point2::new(0.0, 0.0), Point2::new(4.0, 0.0)]);
    }

    #[test]
    fn point_prefix_distance() {
        let a = PathPrefix::Point(Point2::new(0.0, 0.0));
        let b = PathPrefix::Point(Point2::new(3.0, 4.0));
        assert_eq!(min_prefix_distance(&a, &b), 5.0);
        let c = path(&[(-5.0, 2.0), (5.0, 2.0)]).cut(100.0);
        assert_eq!(min_prefix_distance(&a, &c), 2.0);
    }

    #[test]
    fn crossing_examples() {
        let ego = path(&[(0.0, 0.0), (20.0, 0.0)]);
        let other = path(&[(10.0, -10.0), (10.0, 10.0)]);
        let c = find_crossing(&ego, &other).unwrap();
        assert_eq!(c.point, Point2::new(10.0, 0.0));
        assert_eq!(c.arclen_ego, 10.0);
        assert_eq!(c.arclen_other, 10.0);

        let parallel = path(&[(0.0, 3.5), (20.0, 3.5)]);
        assert_eq!(find_crossing(&ego, &parallel), None);
    }

    #[test]
    fn crossing_of_merging_paths() {
        // Other joins the ego lane at (10, 0) and then runs along it.
        let ego = path(&[(0.0, 0.0), (30.0, 0.0)]);
        let other = path(&[(10.0, -10.0), (10.0, 0.0), (30.0, 0.0)]);
        let c = find_crossing(&ego, &other).unwrap();
        assert!((c.arclen_ego - 10.0).abs() < 1e-12);
        assert!((c.arclen_other - 10.0).abs() < 1e-12);
    }

    #[test]
    fn tangent_and_projection() {
        let l = path(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0)]);
        assert_eq!(l.tangent_at(1.0), Point2::new(1.0, 0.0));
        assert_eq!(l.tangent_at(5.0), Point2::new(0.0, 1.0));
        let pr = l.project(Point2::new(5.0, 2.0));
        assert!((pr.arclen - 6.0).abs() < 1e-12);
        assert!((pr.distance - 1.0).abs() < 1e-12);
    }
}
