use serde::{Deserialize, Serialize};

use crate::error::{HblError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T> Point2<T> {
    pub const fn new(x: T, y: T) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentVec2<T> {
    pub xi: T,
    pub eta: T,
    pub base: Point2<T>,
}

impl<T> TangentVec2<T> {
    pub const fn new(xi: T, eta: T, base: Point2<T>) -> Self {
        Self { xi, eta, base }
    }
}

/// Row-major 2x2 matrix with cached determinant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jacobian2<T> {
    pub m: [[T; 2]; 2],
    pub det: T,
}

impl<T: Scalar> Jacobian2<T> {
    pub fn new(m: [[T; 2]; 2]) -> Self {
        let det = m[0][0].clone() * m[1][1].clone() - m[0][1].clone() * m[1][0].clone();
        Self { m, det }
    }

    pub fn identity() -> Self {
        Self::new([[T::one(), T::zero()], [T::zero(), T::one()]])
    }

    pub fn apply(&self, xi: T, eta: T) -> (T, T) {
        let m = &self.m;
        (
            m[0][0].clone() * xi.clone() + m[0][1].clone() * eta.clone(),
            m[1][0].clone() * xi + m[1][1].clone() * eta,
        )
    }

    /// `self * rhs`
    pub fn mul(&self, rhs: &Self) -> Self {
        let (a, b) = (&self.m, &rhs.m);
        let e = |i: usize, j: usize| a[i][0].clone() * b[0][j].clone() + a[i][1].clone() * b[1][j].clone();
        Self::new([[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]])
    }

    pub fn trace(&self) -> T {
        self.m[0][0].clone() + self.m[1][1].clone()
    }
}

impl Jacobian2<f64> {
    pub fn scale(&self, s: f64) -> Self {
        Self::new([
            [self.m[0][0] * s, self.m[0][1] * s],
            [self.m[1][0] * s, self.m[1][1] * s],
        ])
    }

    /// Singular values (largest first).
    pub fn singular_values(&self) -> (f64, f64) {
        let m = &self.m;
        let s = m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1];
        let d = self.det.abs();
        let disc = ((s - 2.0 * d) * (s + 2.0 * d)).max(0.0).sqrt();
        let smax = ((s + disc) / 2.0).sqrt();
        let smin = if smax > 0.0 { d / smax } else { 0.0 };
        (smax, smin)
    }

    pub fn norm(&self) -> f64 {
        self.singular_values().0
    }

    /// Unit right-singular vector of the smallest singular value
    /// (the most contracted input direction).
    pub fn most_contracted_direction(&self) -> (f64, f64) {
        let m = &self.m;
        // eigenvector of M^T M for its smaller eigenvalue
        let p = m[0][0] * m[0][0] + m[1][0] * m[1][0];
        let q = m[0][0] * m[0][1] + m[1][0] * m[1][1];
        let r = m[0][1] * m[0][1] + m[1][1] * m[1][1];
        let theta = 0.5 * (2.0 * q).atan2(p - r);
        // theta is the direction of the larger eigenvalue
        (-theta.sin(), theta.cos())
    }
}

pub fn slope<T: Scalar>(v: &TangentVec2<T>) -> Result<Option<T>> {
    let (xi, eta) = (v.xi.clone(), v.eta.clone());
    if xi.is_zero() {
        if eta.is_zero() {
            return Err(HblError::ZeroVector);
        }
        return Ok(None);
    }
    let s = eta / xi;
    Ok(Some(if s < T::zero() { -s } else { s }))
}

/// `|eta/xi|` with `f64::INFINITY` standing in for a vertical vector.
pub fn slope_f64(v: &TangentVec2<f64>) -> Result<f64> {
    Ok(slope(v)?.unwrap_or(f64::INFINITY))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub const fn working() -> Self {
        Self::new(-3.0, 3.0, -1.0, 1.0)
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    /// Euclidean distance from `p` to the rectangle (0 inside).
    pub fn distance(&self, p: &Point2<f64>) -> f64 {
        let dx = (self.x0 - p.x).max(0.0).max(p.x - self.x1);
        let dy = (self.y0 - p.y).max(0.0).max(p.y - self.y1);
        dx.hypot(dy)
    }
}

pub type P = Point2<f64>;

pub fn dist(a: &P, b: &P) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

pub fn lerp(a: &P, b: &P, t: f64) -> P {
    P::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
}

pub fn polyline_length(pts: &[P]) -> f64 {
    pts.windows(2).map(|w| dist(&w[0], &w[1])).sum()
}

pub fn cumulative_arclength(pts: &[P]) -> Vec<f64> {
    let mut out = Vec::with_capacity(pts.len());
    let mut s = 0.0;
    for (i, p) in pts.iter().enumerate() {
        if i > 0 {
            s += dist(&pts[i - 1], p);
        }
        out.push(s);
    }
    out
}

/// Distance from `p` to segment `ab` and the segment parameter of the foot.
pub fn point_segment_distance(p: &P, a: &P, b: &P) -> (f64, f64) {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let l2 = dx * dx + dy * dy;
    let t = if l2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (dist(p, &lerp(a, b, t)), t)
}

pub fn point_polyline_distance(p: &P, pts: &[P]) -> f64 {
    match pts.len() {
        0 => f64::INFINITY,
        1 => dist(p, &pts[0]),
        _ => pts
            .windows(2)
            .map(|w| point_segment_distance(p, &w[0], &w[1]).0)
            .fold(f64::INFINITY, f64::min),
    }
}

/// Proper or touching intersection of segments `p0p1` and `q0q1`,
/// returned as the parameters `(s, t)` along each.
pub fn segment_intersection(p0: &P, p1: &P, q0: &P, q1: &P) -> Option<(f64, f64)> {
    let r = (p1.x - p0.x, p1.y - p0.y);
    let s = (q1.x - q0.x, q1.y - q0.y);
    let den = r.0 * s.1 - r.1 * s.0;
    let qp = (q0.x - p0.x, q0.y - p0.y);
    let scale = (r.0.hypot(r.1) * s.0.hypot(s.1)).max(f64::MIN_POSITIVE);
    if den.abs() <= 1e-15 * scale {
        // parallel: report overlap midpoint if collinear
        let cross = qp.0 * r.1 - qp.1 * r.0;
        if cross.abs() > 1e-15 * scale.sqrt() * qp.0.hypot(qp.1).max(1e-300) {
            return None;
        }
        let rr = r.0 * r.0 + r.1 * r.1;
        if rr == 0.0 {
            return None;
        }
        let t0 = (qp.0 * r.0 + qp.1 * r.1) / rr;
        let t1 = t0 + (s.0 * r.0 + s.1 * r.1) / rr;
        let (lo, hi) = (t0.min(t1).max(0.0), t0.max(t1).min(1.0));
        if lo > hi {
            return None;
        }
        let sm = 0.5 * (lo + hi);
        let tm = if (t1 - t0).abs() > 0.0 { (sm - t0) / (t1 - t0) } else { 0.0 };
        return Some((sm, tm.clamp(0.0, 1.0)));
    }
    let sp = (qp.0 * s.1 - qp.1 * s.0) / den;
    let tq = (qp.0 * r.1 - qp.1 * r.0) / den;
    if (0.0..=1.0).contains(&sp) && (0.0..=1.0).contains(&tq) {
        Some((sp, tq))
    } else {
        None
    }
}

/// Reciprocal circumradius of three points; 0 for collinear triples.
pub fn discrete_curvature(a: &P, b: &P, c: &P) -> f64 {
    let (ab, bc, ca) = (dist(a, b), dist(b, c), dist(c, a));
    let cross = ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs();
    let den = ab * bc * ca;
    if den == 0.0 {
        0.0
    } else {
        2.0 * cross / den
    }
}

/// Unit tangent at vertex `i` from the 3-point stencil.
pub fn tangent_at(pts: &[P], i: usize) -> (f64, f64) {
    let n = pts.len();
    let (a, b) = if n < 2 {
        return (1.0, 0.0);
    } else if i == 0 {
        (pts[0], pts[1])
    } else if i + 1 >= n {
        (pts[n - 2], pts[n - 1])
    } else {
        (pts[i - 1], pts[i + 1])
    };
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let l = dx.hypot(dy);
    if l == 0.0 {
        (1.0, 0.0)
    } else {
        (dx / l, dy / l)
    }
}

/// Angle in `[0, pi/2]` between two undirected lines.
pub fn line_angle(u: (f64, f64), v: (f64, f64)) -> f64 {
    let cross = (u.0 * v.1 - u.1 * v.0).abs();
    let dot = (u.0 * v.0 + u.1 * v.1).abs();
    cross.atan2(dot)
}

/// Crossing-number point-in-polygon test on a closed ring.
pub fn point_in_polygon(p: &P, ring: &[P]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (&ring[i], &ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let xc = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < xc {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Signed area (positive for counter-clockwise rings).
pub fn signed_area(ring: &[P]) -> f64 {
    let n = ring.len();
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (&ring[i], &ring[(i + 1) % n]);
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}
