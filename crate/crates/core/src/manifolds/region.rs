//! The compact domain bounded by the stable arcs `A0-`, `A0+` and the two
//! arcs of the image of the unstable saddle segment that join them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grow::ManifoldCurve;
use super::stable_graph::StableGraphs;
use super::tangency::{relevant_unstable, TangencyConfig};
use crate::error::{HblError, Result};
use crate::geometry::{dist, point_in_polygon, point_polyline_distance, point_segment_distance, signed_area};
use crate::{MapParams, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionR {
    pub a: f64,
    pub b: f64,
    /// `[A0-, A0+]`, each oriented bottom to top.
    pub stable_arcs: [Vec<Point>; 2],
    /// `[bottom, top]`, each oriented from `A0-` to `A0+`.
    pub unstable_arcs: [Vec<Point>; 2],
    /// Bottom-left, bottom-right, top-right, top-left.
    pub corners: [Point; 4],
    /// Closed boundary, counter-clockwise; the last point repeats the first.
    pub ring: Vec<Point>,
    pub bbox: [f64; 4],
    #[serde(skip)]
    index: EdgeIndex,
}

/// Ring edges bucketed by `x` for a vertical-ray crossing count.
#[derive(Debug, Clone, Default, PartialEq)]
struct EdgeIndex {
    x0: f64,
    dx: f64,
    buckets: Vec<Vec<u32>>,
}

impl EdgeIndex {
    fn new(ring: &[Point], x0: f64, x1: f64) -> Self {
        let nb = (ring.len() / 8).clamp(1, 4096);
        let dx = ((x1 - x0) / nb as f64).max(f64::MIN_POSITIVE);
        let mut buckets = vec![Vec::new(); nb];
        for (k, e) in ring.windows(2).enumerate() {
            let lo = (((e[0].x.min(e[1].x) - x0) / dx).floor().max(0.0) as usize).min(nb - 1);
            let hi = (((e[0].x.max(e[1].x) - x0) / dx).floor().max(0.0) as usize).min(nb - 1);
            for b in &mut buckets[lo..=hi] {
                b.push(k as u32);
            }
        }
        Self { x0, dx, buckets }
    }

    fn near(&self, ring: &[Point], z: &Point, eps: f64) -> bool {
        let nb = self.buckets.len() as isize;
        let at = |x: f64| (((x - self.x0) / self.dx).floor() as isize).clamp(0, nb - 1) as usize;
        (at(z.x - eps)..=at(z.x + eps)).any(|k| {
            self.buckets[k].iter().any(|&e| point_segment_distance(z, &ring[e as usize], &ring[e as usize + 1]).0 <= eps)
        })
    }

    fn contains(&self, ring: &[Point], z: &Point) -> bool {
        let nb = self.buckets.len();
        let k = (((z.x - self.x0) / self.dx).floor().max(0.0) as usize).min(nb - 1);
        let mut inside = false;
        for &e in &self.buckets[k] {
            let (a, b) = (&ring[e as usize], &ring[e as usize + 1]);
            if (a.x > z.x) != (b.x > z.x) {
                let y = a.y + (z.x - a.x) * (b.y - a.y) / (b.x - a.x);
                if y > z.y {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

impl RegionR {
    pub fn contains(&self, z: &Point) -> bool {
        if !(z.x >= self.bbox[0] && z.x <= self.bbox[1] && z.y >= self.bbox[2] && z.y <= self.bbox[3]) {
            return false;
        }
        if self.index.buckets.is_empty() {
            point_in_polygon(z, &self.ring)
        } else {
            self.index.contains(&self.ring, z)
        }
    }

    pub fn boundary_distance(&self, z: &Point) -> f64 {
        point_polyline_distance(z, &self.ring)
    }

    /// Whether `z` lies within `eps` of the boundary.
    pub fn near_boundary(&self, z: &Point, eps: f64) -> bool {
        if self.index.buckets.is_empty() {
            self.boundary_distance(z) <= eps
        } else {
            self.index.near(&self.ring, z, eps)
        }
    }

    /// Largest gap where consecutive boundary arcs meet.
    pub fn closure_gap(&self) -> f64 {
        let [sm, sp] = &self.stable_arcs;
        let [lo, hi] = &self.unstable_arcs;
        [
            dist(lo.last().unwrap(), sp.first().unwrap()),
            dist(sp.last().unwrap(), hi.last().unwrap()),
            dist(hi.first().unwrap(), sm.last().unwrap()),
            dist(sm.first().unwrap(), lo.first().unwrap()),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Winding number of the boundary around `z`.
    pub fn winding(&self, z: &Point) -> i32 {
        let mut w = 0.0;
        for s in self.ring.windows(2) {
            let a = (s[0].x - z.x).atan2(s[0].y - z.y);
            let b = (s[1].x - z.x).atan2(s[1].y - z.y);
            let mut d = a - b;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            w += d;
        }
        (w / (2.0 * std::f64::consts::PI)).round() as i32
    }
}

/// One branch of the unstable curve from the saddle outward, as `(tau, point)`.
fn branch_vertices(c: &ManifoldCurve, beta: i8) -> Vec<(i8, f64, Point)> {
    c.pieces
        .iter()
        .find(|p| p.branch == beta && p.taus.first() == Some(&f64::NEG_INFINITY))
        .map(|p| p.taus.iter().zip(&p.points).map(|(t, z)| (beta, *t, *z)).collect())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    Minus,
    Plus,
}

struct Crossing {
    side: Side,
    /// Position along the vertex sequence: vertex index plus fraction.
    pos: f64,
    point: Point,
    /// Last vertex strictly before and first strictly after the crossing.
    before: usize,
    after: usize,
}

/// Signed horizontal offset from `A0-` or `A0+`; `None` off the graph domain.
fn offset(g: &StableGraphs, side: Side, z: &Point) -> Option<f64> {
    let (y0, y1) = g.y_range();
    if !(z.y >= y0 && z.y <= y1) {
        return None;
    }
    Some(match side {
        Side::Minus => z.x - g.h_minus(z.y),
        Side::Plus => z.x - g.h_plus(z.y),
    })
}

/// Crossings of `A0-`/`A0+` along a vertex sequence `(branch, tau, point)`.
/// Vertices on a graph count once; sign changes are refined on the curve.
fn crossings(c: &ManifoldCurve, g: &StableGraphs, seq: &[(i8, f64, Point)]) -> Vec<Crossing> {
    let mut out = Vec::new();
    for side in [Side::Minus, Side::Plus] {
        let f: Vec<Option<f64>> = seq.iter().map(|v| offset(g, side, &v.2)).collect();
        for i in 0..seq.len() {
            if f[i].is_some_and(|v| v.abs() < 1e-12) {
                out.push(Crossing { side, pos: i as f64, point: snap(g, side, seq[i].2), before: i.wrapping_sub(1), after: i + 1 });
            }
        }
        for i in 0..seq.len().saturating_sub(1) {
            let (Some(f0), Some(f1)) = (f[i], f[i + 1]) else { continue };
            if f0.abs() < 1e-12 || f1.abs() < 1e-12 || f0 * f1 > 0.0 {
                continue;
            }
            let (b0, t0, _) = seq[i];
            let (b1, t1, _) = seq[i + 1];
            let mut frac = 0.5;
            let mut point = None;
            if b0 == b1 && t0.is_finite() && t1.is_finite() {
                let (mut lo, mut hi) = (t0, t1);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if mid == lo || mid == hi {
                        break;
                    }
                    match offset(g, side, &c.point_at(b0, mid)) {
                        Some(fm) if fm * f0 > 0.0 => lo = mid,
                        Some(_) => hi = mid,
                        None => break,
                    }
                }
                let t = 0.5 * (lo + hi);
                frac = (t - t0) / (t1 - t0);
                point = Some(c.point_at(b0, t));
            }
            let z = point.unwrap_or_else(|| {
                let s = f0 / (f0 - f1);
                frac = s;
                Point::new(seq[i].2.x + s * (seq[i + 1].2.x - seq[i].2.x), seq[i].2.y + s * (seq[i + 1].2.y - seq[i].2.y))
            });
            out.push(Crossing { side, pos: i as f64 + frac, point: snap(g, side, z), before: i, after: i + 1 });
        }
    }
    out.sort_by(|a, b| a.pos.total_cmp(&b.pos));
    out
}

/// Vertex on a stable graph at the height of `z`, so arcs meet exactly.
fn snap(g: &StableGraphs, side: Side, z: Point) -> Point {
    let x = match side {
        Side::Minus => g.h_minus(z.y),
        Side::Plus => g.h_plus(z.y),
    };
    Point::new(x, z.y)
}

pub fn build_region_r(p: &MapParams) -> Result<RegionR> {
    build_region_r_with(p, &TangencyConfig::default())
}

pub fn build_region_r_with(p: &MapParams, cfg: &TangencyConfig) -> Result<RegionR> {
    let g = StableGraphs::new(p)?;
    let wu = relevant_unstable(p, cfg)?;
    let flip: i8 = if wu.multiplier < 0.0 { -1 } else { 1 };

    // the saddle segment: each branch up to its first crossing of a stable
    // graph, ignoring a saddle that lies on A0- itself
    let mut limits = [f64::NEG_INFINITY; 2];
    let slot = |beta: i8| if beta > 0 { 0 } else { 1 };
    for beta in [1i8, -1] {
        let v = branch_vertices(&wu, beta);
        // a branch that leaves through the far side of A0- stays outside
        let inward = v.get(1).and_then(|z| offset(&g, Side::Minus, &z.2)).is_some_and(|f| f > 0.0);
        if !inward {
            continue;
        }
        let first = crossings(&wu, &g, &v).into_iter().find(|c| c.before != usize::MAX && v[c.after.min(v.len() - 1)].1.is_finite());
        if let Some(c) = first {
            // its image is the same curve one unit of parameter further along
            let t = if c.after < v.len() { v[c.before].1.max(v[c.after].1) } else { v[c.before].1 };
            limits[slot(beta * flip)] = t + 1.0;
        }
    }
    if limits.iter().all(|l| !l.is_finite()) {
        return Err(HblError::MissingArc("unstable saddle segment".into()));
    }

    // the image of the segment as one sequence through the saddle; a little
    // past each end so the closing crossings are bracketed
    let mut seq: Vec<(i8, f64, Point)> = Vec::new();
    for beta in [-1i8, 1] {
        let lim = limits[slot(beta)];
        let mut part: Vec<(i8, f64, Point)> = Vec::new();
        if lim.is_finite() {
            let all = branch_vertices(&wu, beta);
            part = all.iter().copied().skip(1).take_while(|v| v.1 <= lim + 0.01).collect();
            if part.len() + 1 == all.len() {
                return Err(HblError::MissingArc("image of the unstable saddle segment leaves the grown window".into()));
            }
        }
        if beta < 0 {
            part.reverse();
            seq.extend(part);
            seq.push((1, f64::NEG_INFINITY, wu.saddle));
        } else {
            seq.extend(part);
        }
    }
    let cs = crossings(&wu, &g, &seq);
    let mut arcs: Vec<Vec<Point>> = Vec::new();
    for w in cs.windows(2) {
        let (c0, c1) = (&w[0], &w[1]);
        if c0.side == c1.side || c1.before == usize::MAX || c0.after > c1.before + 1 {
            continue;
        }
        let mut arc = vec![c0.point];
        if c0.after <= c1.before {
            arc.extend(seq[c0.after..=c1.before].iter().map(|v| v.2));
        }
        arc.push(c1.point);
        if c0.side == Side::Plus {
            arc.reverse();
        }
        arcs.push(arc);
    }
    if arcs.len() < 2 {
        return Err(HblError::MissingArc(format!("only {} unstable arc(s) join A0- and A0+ at a = {}", arcs.len(), p.a)));
    }
    let height = |arc: &Vec<Point>| {
        arc.windows(2)
            .find(|s| (s[0].x <= 0.0) != (s[1].x <= 0.0))
            .map(|s| {
                let t = s[0].x / (s[0].x - s[1].x);
                s[0].y + t * (s[1].y - s[0].y)
            })
            .unwrap_or(arc[0].y)
    };
    arcs.sort_by(|a, b| height(a).total_cmp(&height(b)));
    let bottom = arcs.first().unwrap().clone();
    let top = arcs.last().unwrap().clone();

    let n = 64;
    let graph_arc = |side: Side, y0: f64, y1: f64| -> Vec<Point> {
        (0..=n)
            .map(|i| {
                let y = y0 + (y1 - y0) * i as f64 / n as f64;
                snap(&g, side, Point::new(0.0, y))
            })
            .collect()
    };
    let bl = bottom[0];
    let br = *bottom.last().unwrap();
    let tr = *top.last().unwrap();
    let tl = top[0];
    let s_minus = graph_arc(Side::Minus, bl.y, tl.y);
    let s_plus = graph_arc(Side::Plus, br.y, tr.y);

    let mut ring = bottom.clone();
    ring.extend(s_plus.iter().skip(1));
    ring.extend(top.iter().rev().skip(1));
    ring.extend(s_minus.iter().rev().skip(1));
    if signed_area(&ring) < 0.0 {
        ring.reverse();
    }
    let bbox = ring.iter().fold([f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY], |b, z| {
        [b[0].min(z.x), b[1].max(z.x), b[2].min(z.y), b[3].max(z.y)]
    });
    Ok(RegionR {
        a: p.a,
        b: p.b,
        stable_arcs: [s_minus, s_plus],
        unstable_arcs: [bottom, top],
        corners: [bl, br, tr, tl],
        index: EdgeIndex::new(&ring, bbox[0], bbox[1]),
        ring,
        bbox,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeSample {
    pub tested: usize,
    pub returned: usize,
    pub unbounded: usize,
    /// Candidates dropped because `x` or `f(x)` was within the margin of the
    /// polygonal boundary, where the side is decided by chord error.
    pub near_boundary: usize,
    pub margin: f64,
    /// Tracked orbits whose first coordinate failed to decrease at some
    /// step after `|x| > 2`.
    pub x_not_decreasing: usize,
}

/// Boundary margin matching the chord sagitta of the unstable arcs.
pub fn default_margin() -> f64 {
    let c = super::grow::GrowthConfig::unstable_default();
    c.h_max * c.theta_max
}

/// Samples points of `R` whose image leaves `R` and follows them for
/// `iterations` steps, counting any return to `R`. Points closer than
/// `margin` to the boundary are not classified.
pub fn escape_sample(p: &MapParams, r: &RegionR, n: usize, iterations: usize, margin: f64, seed: u64) -> EscapeSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [x0, x1, y0, y1] = r.bbox;
    let mut out = EscapeSample { tested: 0, returned: 0, unbounded: 0, near_boundary: 0, margin, x_not_decreasing: 0 };
    let mut draws = 0usize;
    while out.tested < n && draws < 10_000 * n.max(1) {
        draws += 1;
        let z = Point::new(rng.gen_range(x0..=x1), rng.gen_range(y0..=y1));
        if !r.contains(&z) {
            continue;
        }
        let mut w = p.step(&z);
        if r.contains(&w) {
            continue;
        }
        if r.near_boundary(&w, margin) || r.near_boundary(&z, margin) {
            out.near_boundary += 1;
            continue;
        }
        out.tested += 1;
        let mut far = false;
        for _ in 1..iterations {
            let v = p.step(&w);
            if far {
                if !v.x.is_finite() {
                    break;
                }
                if v.x >= w.x {
                    out.x_not_decreasing += 1;
                    break;
                }
            } else if v.x.abs() > 2.0 {
                far = true;
                out.unbounded += 1;
            } else if r.contains(&v) && !r.near_boundary(&v, margin) {
                out.returned += 1;
                break;
            }
            w = v;
        }
    }
    out
}
