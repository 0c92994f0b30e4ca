use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grow::{ManifoldCurve, ManifoldKind};
use crate::geometry::{dist, line_angle, segment_intersection, tangent_at, Rect};
use crate::Point;

pub const THETA_TRANSVERSE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionPoint {
    pub location: Point,
    /// Angle between the two tangent lines, in `[0, pi/2]`.
    pub angle: f64,
    /// Arclength coordinate on the stable curve (the first curve if both
    /// have the same kind).
    pub s_param: f64,
    pub u_param: f64,
    pub transverse: bool,
}

/// A segment `i -> i+1` of piece `piece`.
#[derive(Debug, Clone, Copy)]
struct Seg {
    piece: usize,
    i: usize,
}

fn segments(c: &ManifoldCurve, w: &Rect) -> Vec<Seg> {
    let mut out = Vec::new();
    for (k, pc) in c.pieces.iter().enumerate() {
        for i in 0..pc.points.len().saturating_sub(1) {
            let (a, b) = (&pc.points[i], &pc.points[i + 1]);
            let bx = (a.x.min(b.x), a.x.max(b.x), a.y.min(b.y), a.y.max(b.y));
            if bx.1 >= w.x0 && bx.0 <= w.x1 && bx.3 >= w.y0 && bx.2 <= w.y1 {
                out.push(Seg { piece: k, i });
            }
        }
    }
    out
}

struct Grid {
    w: Rect,
    cell: f64,
    map: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn cells(&self, a: &Point, b: &Point) -> impl Iterator<Item = (i64, i64)> {
        let w = &self.w;
        let cl = |v: f64, lo: f64, hi: f64| ((v.clamp(lo, hi) - lo) / self.cell).floor() as i64;
        let (i0, i1) = (cl(a.x.min(b.x), w.x0, w.x1), cl(a.x.max(b.x), w.x0, w.x1));
        let (j0, j1) = (cl(a.y.min(b.y), w.y0, w.y1), cl(a.y.max(b.y), w.y0, w.y1));
        (i0..=i1).flat_map(move |i| (j0..=j1).map(move |j| (i, j)))
    }
}

fn seg_points<'a>(c: &'a ManifoldCurve, s: &Seg) -> (&'a Point, &'a Point) {
    let pc = &c.pieces[s.piece];
    (&pc.points[s.i], &pc.points[s.i + 1])
}

/// Point on both segments, averaged so the result does not depend on the
/// order of the arguments.
fn meet(a0: &Point, a1: &Point, b0: &Point, b1: &Point, s: f64, t: f64) -> Point {
    Point::new(
        0.5 * (a0.x + s * (a1.x - a0.x) + b0.x + t * (b1.x - b0.x)),
        0.5 * (a0.y + s * (a1.y - a0.y) + b0.y + t * (b1.y - b0.y)),
    )
}

/// Simultaneous bisection of both parameter intervals. Returns the refined
/// location and the two parameters.
fn refine(c1: &ManifoldCurve, b1: i8, t1: (f64, f64), c2: &ManifoldCurve, b2: i8, t2: (f64, f64)) -> Option<(Point, f64, f64)> {
    let (mut a1, mut e1) = t1;
    let (mut a2, mut e2) = t2;
    let mut p = [c1.point_at(b1, a1), c1.point_at(b1, e1), c2.point_at(b2, a2), c2.point_at(b2, e2)];
    let mut last = None;
    for _ in 0..64 {
        let (m1, m2) = (0.5 * (a1 + e1), 0.5 * (a2 + e2));
        let hit = segment_intersection(&p[0], &p[1], &p[2], &p[3]);
        if let Some((s, t)) = hit {
            last = Some((meet(&p[0], &p[1], &p[2], &p[3], s, t), a1 + s * (e1 - a1), a2 + t * (e2 - a2)));
        }
        if !(m1 > a1 && m1 < e1 && m2 > a2 && m2 < e2) {
            break;
        }
        let (q1, q2) = (c1.point_at(b1, m1), c2.point_at(b2, m2));
        let halves1 = [((a1, m1), (p[0], q1)), ((m1, e1), (q1, p[1]))];
        let halves2 = [((a2, m2), (p[2], q2)), ((m2, e2), (q2, p[3]))];
        let mut next = None;
        'search: for h1 in &halves1 {
            for h2 in &halves2 {
                if segment_intersection(&h1.1 .0, &h1.1 .1, &h2.1 .0, &h2.1 .1).is_some() {
                    next = Some((*h1, *h2));
                    break 'search;
                }
            }
        }
        match next {
            Some((h1, h2)) => {
                (a1, e1) = h1.0;
                (a2, e2) = h2.0;
                p = [h1.1 .0, h1.1 .1, h2.1 .0, h2.1 .1];
            }
            None => break,
        }
    }
    last
}

fn tangent(c: &ManifoldCurve, seg: &Seg, tau: Option<f64>) -> (f64, f64) {
    let pc = &c.pieces[seg.piece];
    match tau {
        Some(t) if t.is_finite() => c.tangent_at(pc.branch, t),
        _ => tangent_at(&pc.points, seg.i),
    }
}

/// All crossings of `c1` and `c2` inside `window`. A saddle shared by both
/// curves is not reported.
pub fn find_intersections(c1: &ManifoldCurve, c2: &ManifoldCurve, window: &Rect) -> Vec<IntersectionPoint> {
    find_intersections_with(c1, c2, window, THETA_TRANSVERSE)
}

pub fn find_intersections_with(c1: &ManifoldCurve, c2: &ManifoldCurve, window: &Rect, theta: f64) -> Vec<IntersectionPoint> {
    let s1 = segments(c1, window);
    let s2 = segments(c2, window);
    let h = c1.cfg.h_max.max(c2.cfg.h_max);
    let cell = (4.0 * h).max(((window.x1 - window.x0) * (window.y1 - window.y0) / (s2.len().max(1) as f64)).sqrt());
    let mut grid = Grid { w: *window, cell, map: HashMap::new() };
    for (k, s) in s2.iter().enumerate() {
        let (a, b) = seg_points(c2, s);
        let cells: Vec<_> = grid.cells(a, b).collect();
        for key in cells {
            grid.map.entry(key).or_default().push(k);
        }
    }
    let shared = dist(&c1.saddle, &c2.saddle) < 1e-12;
    let excl = 10.0 * c1.cfg.offset.max(c2.cfg.offset);
    let mut hits: Vec<IntersectionPoint> = s1
        .par_iter()
        .flat_map_iter(|sa| {
            let (a0, a1) = seg_points(c1, sa);
            let mut cand: Vec<usize> = grid.cells(a0, a1).filter_map(|key| grid.map.get(&key)).flatten().copied().collect();
            cand.sort_unstable();
            cand.dedup();
            let mut out = Vec::new();
            for k in cand {
                let sb = &s2[k];
                let (b0, b1) = seg_points(c2, sb);
                let Some((s, t)) = segment_intersection(a0, a1, b0, b1) else { continue };
                let (pa, pb) = (&c1.pieces[sa.piece], &c2.pieces[sb.piece]);
                let ta = (pa.taus[sa.i], pa.taus[sa.i + 1]);
                let tb = (pb.taus[sb.i], pb.taus[sb.i + 1]);
                let mut loc = meet(a0, a1, b0, b1, s, t);
                let (mut tau_a, mut tau_b) = (None, None);
                if ta.0.is_finite() && tb.0.is_finite() {
                    if let Some((q, u, v)) = refine(c1, pa.branch, ta, c2, pb.branch, tb) {
                        loc = q;
                        tau_a = Some(u);
                        tau_b = Some(v);
                    }
                }
                if !window.contains(&loc) || (shared && dist(&loc, &c1.saddle) < excl) {
                    continue;
                }
                let angle = line_angle(tangent(c1, sa, tau_a), tangent(c2, sb, tau_b));
                let arc_a = pa.arclength[sa.i] + s * (pa.arclength[sa.i + 1] - pa.arclength[sa.i]);
                let arc_b = pb.arclength[sb.i] + t * (pb.arclength[sb.i + 1] - pb.arclength[sb.i]);
                let (s_param, u_param) = match (c1.kind, c2.kind) {
                    (ManifoldKind::Unstable, ManifoldKind::Stable) => (arc_b, arc_a),
                    _ => (arc_a, arc_b),
                };
                out.push(IntersectionPoint { location: loc, angle, s_param, u_param, transverse: angle > theta });
            }
            out
        })
        .collect();
    hits.sort_by(|p, q| p.location.x.total_cmp(&q.location.x).then(p.location.y.total_cmp(&q.location.y)));
    merge_duplicates(hits, 2.0 * h)
}

/// Collapses repeats of one crossing found through adjacent segment pairs,
/// and runs of tangential hits along an overlap, to a single point.
pub(crate) fn merge_duplicates(hits: Vec<IntersectionPoint>, overlap_radius: f64) -> Vec<IntersectionPoint> {
    let mut out: Vec<IntersectionPoint> = Vec::new();
    // start and latest raw hit of the current tangential chain, with its slot in `out`
    let mut chain: Option<(Point, Point, usize)> = None;
    for h in hits {
        if let Some((start, prev, k)) = chain {
            if !h.transverse && dist(&prev, &h.location) < overlap_radius {
                out[k].location = crate::geometry::lerp(&start, &h.location, 0.5);
                chain = Some((start, h.location, k));
                continue;
            }
        }
        let dup = out.iter().rev().take(16).any(|o| dist(&o.location, &h.location) < 1e-9);
        if dup {
            continue;
        }
        chain = (!h.transverse).then_some((h.location, h.location, out.len()));
        out.push(h);
    }
    out
}

/// Crossings of two bare polylines, with 3-point tangents and no
/// parameter refinement. Overlapping collinear stretches collapse to one
/// non-transverse point.
pub fn polyline_intersections(a: &[Point], b: &[Point], theta: f64) -> Vec<IntersectionPoint> {
    let (la, lb) = (crate::geometry::cumulative_arclength(a), crate::geometry::cumulative_arclength(b));
    let mut hits = Vec::new();
    let mut scale: f64 = 0.0;
    for i in 0..a.len().saturating_sub(1) {
        scale = scale.max(dist(&a[i], &a[i + 1]));
        for j in 0..b.len().saturating_sub(1) {
            let Some((s, t)) = segment_intersection(&a[i], &a[i + 1], &b[j], &b[j + 1]) else { continue };
            let angle = line_angle(tangent_at(a, i), tangent_at(b, j));
            hits.push(IntersectionPoint {
                location: meet(&a[i], &a[i + 1], &b[j], &b[j + 1], s, t),
                angle,
                s_param: la[i] + s * (la[i + 1] - la[i]),
                u_param: lb[j] + t * (lb[j + 1] - lb[j]),
                transverse: angle > theta,
            });
        }
    }
    hits.sort_by(|p, q| p.location.x.total_cmp(&q.location.x).then(p.location.y.total_cmp(&q.location.y)));
    merge_duplicates(hits, 2.0 * scale)
}
