//! Finite-order critical structure: the strip `I(delta)`, curve classes,
//! expansion outside the strip, order-n critical points, bound periods and
//! the bound/free decomposition of orbits.
//!
//! Slopes, curvatures and norms are measured in normal-form coordinates
//! `(x, sqrt(b) y)`.

use serde::{Deserialize, Serialize};

use crate::error::{HblError, Result};
use crate::geometry::{cumulative_arclength, discrete_curvature, Rect};
use crate::manifolds::region::RegionR;
use crate::manifolds::ManifoldCurve;
use crate::{Jacobian2x2, MapParams, Point};

pub mod decompose;
pub use decompose::{decompose_orbit, BoundFreeDecomposition, CriticalCache, DecomposeConfig, CACHE_ORDER, FreeReturn, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConstants {
    pub lambda_hat: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub delta: f64,
    pub kappa0: f64,
    pub c0: f64,
}

pub const C0_FLOOR: f64 = 5.0;

impl AnalysisConstants {
    pub fn new(delta: f64, alpha: f64, c0: f64) -> Result<Self> {
        let lambda_hat = 0.99 * std::f64::consts::LN_2;
        let c0 = c0.max(C0_FLOOR);
        let k = Self { lambda_hat, lambda: 0.99 * lambda_hat, alpha, delta, kappa0: c0.powi(-10), c0 };
        k.validate()?;
        Ok(k)
    }

    /// `C0` from the sampled derivative sup over the working rectangle at
    /// `a` and at the ends of `[1.5, 2.5]`, times 1.1.
    pub fn for_map(p: &MapParams, delta: f64) -> Result<Self> {
        let w = Rect::working();
        let sup = [p.a, 1.5, 2.5].iter().map(|&a| p.at_a(a).sampled_derivative_sup(&w, 64)).fold(0.0, f64::max);
        Self::new(delta, 0.01, 1.1 * sup)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.alpha
            && self.alpha < self.lambda
            && self.lambda < self.lambda_hat
            && self.lambda_hat < std::f64::consts::LN_2
            && 0.0 < self.delta
            && self.delta < 1.0
            && 0.0 < self.kappa0
            && self.kappa0 < 1.0;
        if ok {
            Ok(())
        } else {
            Err(HblError::InvalidInput(format!("analysis constants out of range: {self:?}")))
        }
    }

    pub fn critical_region(&self) -> CriticalRegion {
        CriticalRegion { delta: self.delta }
    }
}

impl Default for AnalysisConstants {
    fn default() -> Self {
        Self::new(0.1, 0.01, C0_FLOOR).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRegion {
    pub delta: f64,
}

impl CriticalRegion {
    pub fn in_strip(&self, z: &Point) -> bool {
        z.x.abs() < self.delta
    }

    pub fn contains(&self, z: &Point, r: &RegionR) -> bool {
        self.in_strip(z) && r.contains(z)
    }
}

/// Jacobian of the map in normal-form coordinates.
pub fn jacobian_nf(p: &MapParams, z: &Point) -> Jacobian2x2 {
    let j = p.jacobian(z).m;
    let s = p.sqrt_b();
    Jacobian2x2::new([[j[0][0], j[0][1] / s], [j[1][0] * s, j[1][1]]])
}

fn unit(v: (f64, f64)) -> ((f64, f64), f64) {
    let n = v.0.hypot(v.1);
    ((v.0 / n, v.1 / n), n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveClassVerdict {
    pub is_c2b: bool,
    pub is_h_curve: bool,
    pub max_slope: f64,
    pub max_curvature: f64,
}

/// Slope and curvature classes of a polyline in the coordinates it is given in.
pub fn classify_curve(pts: &[Point], b: f64) -> Result<CurveClassVerdict> {
    if pts.len() < 3 {
        return Err(HblError::TooFewVertices);
    }
    let max_slope = pts
        .windows(2)
        .map(|w| {
            let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
            if dx == 0.0 {
                if dy == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (dy / dx).abs()
            }
        })
        .fold(0.0, f64::max);
    let max_curvature = pts.windows(3).map(|w| discrete_curvature(&w[0], &w[1], &w[2])).fold(0.0, f64::max);
    let sb = b.sqrt();
    Ok(CurveClassVerdict {
        is_c2b: max_slope <= sb && max_curvature <= sb,
        is_h_curve: max_slope <= sb && max_curvature <= 1.0,
        max_slope,
        max_curvature,
    })
}

/// [`classify_curve`] after conversion to normal-form coordinates.
pub fn classify_curve_nf(p: &MapParams, pts: &[Point]) -> Result<CurveClassVerdict> {
    let nf: Vec<Point> = pts.iter().map(|z| p.to_nf(z)).collect();
    classify_curve(&nf, p.b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutsideExpansion {
    pub n: usize,
    pub log_growth: f64,
    /// `log(delta) + lambda_hat n`.
    pub log_bound: f64,
    /// `f^n z` lies in the strip.
    pub strong: bool,
    /// Whether the bound without the `delta` factor holds, when `strong`.
    pub strong_pass: Option<bool>,
    pub slope_out: f64,
    pub pass: bool,
}

impl OutsideExpansion {
    pub const CSV_HEADER: &'static str = "n,log_growth,bound,pass";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.n, self.log_growth, self.log_bound, self.pass)
    }
}

/// Growth of `v` (normal-form components) along `z, ..., f^{n-1} z`, all of
/// which must lie in `R \ I(delta)`. `inside` decides membership in `R`.
pub fn check_outside_expansion(
    p: &MapParams,
    k: &AnalysisConstants,
    z: &Point,
    v: (f64, f64),
    n: usize,
    inside: &dyn Fn(&Point) -> bool,
) -> Result<OutsideExpansion> {
    let sb = p.sqrt_b();
    if n == 0 {
        return Err(HblError::Precondition("n >= 1".into()));
    }
    if v.0 == 0.0 || (v.1 / v.0).abs() > sb {
        return Err(HblError::Precondition(format!("slope of v exceeds sqrt(b): {v:?}")));
    }
    let strip = k.critical_region();
    let (mut w, _) = unit(v);
    let mut log = 0.0;
    let mut cur = *z;
    for i in 0..n {
        if strip.in_strip(&cur) || !inside(&cur) {
            return Err(HblError::Precondition(format!("orbit point {i} is not in R \\ I(delta): ({}, {})", cur.x, cur.y)));
        }
        let (u, l) = unit(jacobian_nf(p, &cur).apply(w.0, w.1));
        w = u;
        log += l.ln();
        cur = p.step(&cur);
    }
    let strong = strip.in_strip(&cur);
    let log_bound = k.lambda_hat * n as f64 + k.delta.ln();
    let strong_pass = strong.then(|| log >= k.lambda_hat * n as f64);
    let slope_out = if w.0 == 0.0 { f64::INFINITY } else { (w.1 / w.0).abs() };
    Ok(OutsideExpansion { n, log_growth: log, log_bound, strong, strong_pass, slope_out, pass: log >= log_bound && slope_out <= sb })
}

/// A smooth arc `s -> gamma(s)` on a parameter interval.
pub trait Arc: Sync {
    fn point(&self, s: f64) -> Point;
    fn range(&self) -> (f64, f64);

    fn tangent(&self, s: f64) -> (f64, f64) {
        let (s0, s1) = self.range();
        let h = 1e-5 * (s1 - s0);
        let (a, b) = ((s - h).max(s0), (s + h).min(s1));
        let (p, q) = (self.point(a), self.point(b));
        unit((q.x - p.x, q.y - p.y)).0
    }
}

/// Catmull-Rom interpolation of a polyline, parametrized by arclength.
#[derive(Debug, Clone)]
pub struct PolylineArc {
    pub points: Vec<Point>,
    s: Vec<f64>,
}

impl PolylineArc {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(HblError::TooFewVertices);
        }
        let s = cumulative_arclength(&points);
        Ok(Self { points, s })
    }

    fn knot_slope(&self, i: usize) -> (f64, f64) {
        let n = self.points.len();
        let (l, r) = (i.saturating_sub(1), (i + 1).min(n - 1));
        let ds = self.s[r] - self.s[l];
        ((self.points[r].x - self.points[l].x) / ds, (self.points[r].y - self.points[l].y) / ds)
    }
}

impl Arc for PolylineArc {
    fn point(&self, s: f64) -> Point {
        let n = self.points.len();
        let s = s.clamp(0.0, self.s[n - 1]);
        let i = match self.s.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let h = self.s[i + 1] - self.s[i];
        if h == 0.0 {
            return self.points[i];
        }
        let t = (s - self.s[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let (h00, h10, h01, h11) = (2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2);
        let (m0, m1) = (self.knot_slope(i), self.knot_slope(i + 1));
        let (a, b) = (self.points[i], self.points[i + 1]);
        Point::new(
            h00 * a.x + h10 * h * m0.0 + h01 * b.x + h11 * h * m1.0,
            h00 * a.y + h10 * h * m0.1 + h01 * b.y + h11 * h * m1.1,
        )
    }

    fn range(&self) -> (f64, f64) {
        (0.0, *self.s.last().unwrap())
    }
}

/// A stretch `tau in [t0, t1]` of one branch of a grown manifold.
pub struct ManifoldArc<'a> {
    pub curve: &'a ManifoldCurve,
    pub branch: i8,
    pub tau: (f64, f64),
}

impl Arc for ManifoldArc<'_> {
    fn point(&self, s: f64) -> Point {
        self.curve.point_at(self.branch, s)
    }

    fn range(&self) -> (f64, f64) {
        self.tau
    }
}

/// `D_{fz} f^k` applied to `(1, 0)` and as a matrix, both in normal form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCheck {
    pub k: usize,
    pub tangent_norm: f64,
    pub matrix_norm: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointApprox {
    pub order: usize,
    pub location: Point,
    pub segment_id: usize,
    pub s: f64,
    /// Angle between the image tangent `Df t` and the most contracted
    /// direction of `D_{f zeta} f^{n-1}`.
    pub alignment_residual: f64,
    pub expansion: Vec<ExpansionCheck>,
}

impl CriticalPointApprox {
    pub fn expansion_ok(&self) -> bool {
        self.expansion.iter().all(|e| e.pass)
    }
}

/// Most contracted direction of `D_{f z} f^{n-1}` in normal form; vertical for `n = 1`.
fn contracted_direction(p: &MapParams, z: &Point, n: usize) -> (f64, f64) {
    let mut m = Jacobian2x2::identity();
    let mut cur = p.step(z);
    for _ in 1..n {
        m = jacobian_nf(p, &cur).mul(&m);
        let s = m.norm();
        if s > 0.0 && s.is_finite() {
            m = m.scale(1.0 / s);
        }
        cur = p.step(&cur);
    }
    if n <= 1 {
        (0.0, 1.0)
    } else {
        m.most_contracted_direction()
    }
}

fn alignment(p: &MapParams, arc: &dyn Arc, s: f64, n: usize) -> (f64, f64) {
    let z = arc.point(s);
    let t = p.vec_to_nf(arc.tangent(s));
    let (w, _) = unit(jacobian_nf(p, &z).apply(t.0, t.1));
    let e = contracted_direction(p, &z, n);
    let det = w.0 * e.1 - w.1 * e.0;
    (det, det.abs().atan2((w.0 * e.0 + w.1 * e.1).abs()))
}

pub const SCAN_SAMPLES: usize = 256;

/// The fold of the `n`-step image of `arc`: the unique zero of
/// `det[Df t(s), e_n(f gamma(s))]` along it.
pub fn find_critical_point(p: &MapParams, k: &AnalysisConstants, arc: &dyn Arc, order: usize, segment_id: usize) -> Result<CriticalPointApprox> {
    if order == 0 {
        return Err(HblError::InvalidInput("order >= 1".into()));
    }
    let (s0, s1) = arc.range();
    let f = |s: f64| alignment(p, arc, s, order).0;
    let ss: Vec<f64> = (0..=SCAN_SAMPLES).map(|i| s0 + (s1 - s0) * i as f64 / SCAN_SAMPLES as f64).collect();
    let vals: Vec<f64> = ss.iter().map(|&s| f(s)).collect();
    let roots: Vec<usize> = (0..SCAN_SAMPLES).filter(|&i| vals[i] == 0.0 || vals[i] * vals[i + 1] < 0.0).collect();
    let i = match roots.len() {
        0 => return Err(HblError::NoCriticalPoint),
        1 => roots[0],
        n => return Err(HblError::UniquenessViolated { roots: n }),
    };
    let (mut lo, mut hi, mut flo) = (ss[i], ss[i + 1], vals[i]);
    if flo == 0.0 {
        hi = lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || flo == 0.0 {
            break;
        }
        let fm = f(mid);
        if fm * flo > 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    let location = arc.point(s);
    if location.x.abs() >= k.delta {
        return Err(HblError::Precondition(format!("critical point at x = {} outside I(delta)", location.x)));
    }
    Ok(CriticalPointApprox {
        order,
        location,
        segment_id,
        s,
        alignment_residual: alignment(p, arc, s, order).1,
        expansion: expansion_checks(p, &location, order),
    })
}

/// `|D_{f zeta} f^k (1,0)|` and `|D_{f zeta} f^k|` for `k = 1..=n`.
pub fn expansion_checks(p: &MapParams, zeta: &Point, n: usize) -> Vec<ExpansionCheck> {
    let mut out = Vec::with_capacity(n);
    let mut cur = p.step(zeta);
    let mut m = Jacobian2x2::identity();
    let (mut w, mut wlog, mut mlog) = ((1.0, 0.0), 0.0, 0.0);
    for kk in 1..=n {
        let j = jacobian_nf(p, &cur);
        m = j.mul(&m);
        let (u, l) = unit(j.apply(w.0, w.1));
        w = u;
        wlog += l.ln();
        let s = m.norm();
        m = m.scale(1.0 / s);
        mlog += s.ln();
        out.push(ExpansionCheck { k: kk, tangent_norm: wlog.exp(), matrix_norm: mlog.exp(), pass: wlog >= 0.0 });
        cur = p.step(&cur);
    }
    out
}

pub const P_MAX: usize = 10_000;

/// Recovery time along the given orbit points (`orbit[0] = x`): the first
/// `p` with `|D f^p t| >= e^{lambda p / 3} |t|` and slope `<= sqrt(b)`.
pub fn bound_period_along(p: &MapParams, k: &AnalysisConstants, orbit: &mut dyn Iterator<Item = Point>, t: (f64, f64), cap: usize) -> Result<usize> {
    let sb = p.sqrt_b();
    let w_rect = Rect::working();
    let (mut w, _) = unit(p.vec_to_nf(t));
    let mut log = 0.0;
    for step in 1..=cap {
        let Some(z) = orbit.next() else {
            return Err(HblError::UnboundedBoundPeriod { index: step });
        };
        if !(z.x.is_finite() && z.y.is_finite()) || !w_rect.contains(&z) {
            return Err(HblError::UnboundedBoundPeriod { index: step });
        }
        let (u, l) = unit(jacobian_nf(p, &z).apply(w.0, w.1));
        w = u;
        log += l.ln();
        let slope = if w.0 == 0.0 { f64::INFINITY } else { (w.1 / w.0).abs() };
        if log >= k.lambda / 3.0 * step as f64 && slope <= sb {
            return Ok(step);
        }
    }
    Err(HblError::BoundPeriodCap { cap })
}

/// [`bound_period_along`] on the directly iterated orbit of `x`.
pub fn bound_period(p: &MapParams, k: &AnalysisConstants, x: &Point, t: (f64, f64), cap: usize) -> Result<usize> {
    let mut it = std::iter::successors(Some(*x), |z| Some(p.step(z)));
    bound_period_along(p, k, &mut it, t, cap)
}

/// Re-verifies both recovery clauses at step `q` by a direct product.
pub fn bound_clauses(p: &MapParams, k: &AnalysisConstants, x: &Point, t: (f64, f64), q: usize) -> (bool, bool) {
    let mut v = p.vec_to_nf(t);
    let n0 = v.0.hypot(v.1);
    let mut z = *x;
    for _ in 0..q {
        v = jacobian_nf(p, &z).apply(v.0, v.1);
        z = p.step(&z);
    }
    let growth = (v.0.hypot(v.1) / n0).ln() >= k.lambda / 3.0 * q as f64;
    (growth, v.0 != 0.0 && (v.1 / v.0).abs() <= p.sqrt_b())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub nu: usize,
    pub n: usize,
    pub length_in: f64,
    pub length_out: f64,
    pub bound: f64,
    pub inside_r: bool,
    pub meets_strip: bool,
    pub vertices: usize,
    pub pass: bool,
}

/// Images of a short curve under `f^n`, refined so image spacing stays
/// below `spacing`.
pub fn iterate_polyline(p: &MapParams, l: &[Point], n: usize, spacing: f64) -> Vec<Point> {
    let mut cur = l.to_vec();
    for _ in 0..n {
        cur = refine_image(p, &cur, spacing, 0);
    }
    cur
}

fn refine_image(p: &MapParams, l: &[Point], spacing: f64, depth: usize) -> Vec<Point> {
    let mut out = Vec::with_capacity(l.len());
    if l.is_empty() {
        return out;
    }
    out.push(p.step(&l[0]));
    for w in l.windows(2) {
        let (a, b) = (p.step(&w[0]), p.step(&w[1]));
        if crate::geometry::dist(&a, &b) > spacing && depth < 20 {
            let m = crate::geometry::lerp(&w[0], &w[1], 0.5);
            let sub = refine_image(p, &[w[0], m, w[1]], spacing, depth + 1);
            out.extend_from_slice(&sub[1..]);
        } else {
            out.push(b);
        }
    }
    out
}

pub fn check_segment_lemma(
    p: &MapParams,
    k: &AnalysisConstants,
    l: &[Point],
    nu: usize,
    n: usize,
    inside: &dyn Fn(&Point) -> bool,
) -> Result<SegmentReport> {
    if l.is_empty() {
        return Err(HblError::InvalidInput("empty curve".into()));
    }
    let length_in = crate::geometry::polyline_length(l);
    if length_in > 2.0 * k.delta.powf(nu as f64 / 2.0) {
        return Err(HblError::Precondition(format!("length(l) = {length_in:e} exceeds 2 delta^(nu/2)")));
    }
    if n < 1 || n >= 2 * nu {
        return Err(HblError::Precondition(format!("need 1 <= n < 2 nu (n = {n}, nu = {nu})")));
    }
    let img = iterate_polyline(p, l, n, (length_in * 1e-3).max(1e-15));
    let strip = k.critical_region();
    let meets_strip = img.iter().any(|z| strip.in_strip(z));
    if !meets_strip {
        return Err(HblError::Precondition("f^n l does not meet I(delta)".into()));
    }
    let length_out = crate::geometry::polyline_length(&img);
    let bound = k.delta.powf(nu as f64 / 3.0);
    let inside_r = img.iter().all(|z| inside(z));
    Ok(SegmentReport { nu, n, length_in, length_out, bound, inside_r, meets_strip, vertices: img.len(), pass: inside_r && length_out <= bound })
}
