//! Adaptive polyline growth of the invariant manifolds of a fixed saddle.
//!
//! A branch is parametrized by `tau = gen + t` (`0 <= t < 1`):
//! `P(tau) = g^gen(s0 + beta * sgn^gen * d * M^t * v)` where `g` is `f` for
//! the unstable and `f^-1` for the stable manifold, `v` the eigenvector,
//! `M = |mu|` and `sgn = sign(mu)`.

use serde::{Deserialize, Serialize};

use crate::error::{HblError, Result};
use crate::geometry::{dist, Rect};
use crate::periodic::PeriodicOrbit;
use crate::{MapParams, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConfig {
    pub h_max: f64,
    pub theta_max: f64,
    /// In-window arclength per curve (both branches together).
    pub target_arclength: f64,
    pub gen_cap: f64,
    pub window: Rect,
    /// Distance of the fundamental domain's outer end from the saddle.
    pub offset: f64,
}

impl GrowthConfig {
    pub fn unstable_default() -> Self {
        Self {
            h_max: 1e-3,
            theta_max: 0.02,
            target_arclength: 50.0,
            gen_cap: 60.0,
            window: Rect::working(),
            offset: 1e-7,
        }
    }

    pub fn stable_default() -> Self {
        Self { target_arclength: 20.0, gen_cap: 8.0, ..Self::unstable_default() }
    }
}

/// Contiguous run of vertices inside (or touching) the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub branch: i8,
    pub taus: Vec<f64>,
    pub points: Vec<Point>,
    /// Cumulative in-window arclength of the curve at each vertex.
    pub arclength: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinementStats {
    pub evaluations: usize,
    pub rejected: usize,
    pub forced: usize,
    pub precision_stops: usize,
}

#[derive(Debug, Clone)]
pub struct ManifoldCurve {
    pub saddle: Point,
    pub kind: ManifoldKind,
    /// Multiplier of `g` along the branch (`lambda_u`, or `1/lambda_s`).
    pub multiplier: f64,
    pub eigenvector: (f64, f64),
    pub cfg: GrowthConfig,
    /// Pieces of the `+` branch followed by pieces of the `-` branch, in
    /// growth order. The first piece of each branch starts at the saddle.
    pub pieces: Vec<Piece>,
    /// Largest `tau` reached over both branches.
    pub generation: f64,
    pub in_window_length: f64,
    pub stats: RefinementStats,
    map: MapParams,
}

const FAR: f64 = 1e9;
/// Per-branch cap on parametrization evaluations.
const EVAL_BUDGET: usize = 20_000_000;

impl ManifoldCurve {
    pub fn map(&self) -> &MapParams {
        &self.map
    }

    fn d0(&self) -> f64 {
        self.cfg.offset / self.multiplier.abs()
    }

    /// Point of branch `beta` at parameter `tau` (`-inf` is the saddle).
    pub fn point_at(&self, beta: i8, tau: f64) -> Point {
        if tau == f64::NEG_INFINITY {
            return self.saddle;
        }
        let gen = tau.floor().max(0.0);
        let t = tau - gen;
        let g = gen as usize;
        let m = self.multiplier.abs();
        let sg = if self.multiplier < 0.0 && g % 2 == 1 { -1.0 } else { 1.0 };
        let s = beta as f64 * sg * self.d0() * m.powf(t);
        // iterate the displacement from the saddle while it is small, so the
        // rounding of the saddle itself is not amplified
        let q = self.saddle;
        let (sb, sig, a) = (self.map.sqrt_b(), self.map.sigma(), self.map.a);
        let mut w = (s * self.eigenvector.0, s * self.eigenvector.1);
        let mut k = 0;
        let delta_form = self.map.is_standard();
        while delta_form && k < g && w.0.abs().max(w.1.abs()) < 1e-2 {
            w = match self.kind {
                ManifoldKind::Unstable => (-a * (2.0 * q.x + w.0) * w.0 - sb * w.1, sig * sb * w.0),
                ManifoldKind::Stable => {
                    let wx = w.1 / (sig * sb);
                    (wx, (-a * (2.0 * q.x + wx) * wx - w.0) / sb)
                }
            };
            k += 1;
        }
        let mut z = Point::new(q.x + w.0, q.y + w.1);
        for _ in k..g {
            z = match self.kind {
                ManifoldKind::Unstable => self.map.step(&z),
                ManifoldKind::Stable => self.map.step_inverse(&z),
            };
            if !(z.x.is_finite() && z.y.is_finite()) || z.x.abs() > 1e150 || z.y.abs() > 1e150 {
                return Point::new(f64::INFINITY, f64::INFINITY);
            }
        }
        z
    }

    /// Unit tangent at `tau` from the 3-point stencil `tau - h, tau, tau + h`.
    pub fn tangent_at(&self, beta: i8, tau: f64) -> (f64, f64) {
        let h = 1e-7 * (1.0 + tau.abs());
        let a = self.point_at(beta, tau - h);
        let b = self.point_at(beta, tau + h);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let l = dx.hypot(dy);
        (dx / l, dy / l)
    }

    pub fn polylines(&self) -> impl Iterator<Item = &[Point]> {
        self.pieces.iter().map(|p| p.points.as_slice())
    }

    pub fn vertex_count(&self) -> usize {
        self.pieces.iter().map(|p| p.points.len()).sum()
    }

    /// The two saddle pieces joined through the saddle, `-` branch reversed
    /// first. Returned with `(branch, tau)` labels per vertex.
    pub fn through_saddle(&self) -> Vec<(i8, f64, Point)> {
        let mut out = Vec::new();
        let first = |b: i8| self.pieces.iter().find(|p| p.branch == b && p.taus.first() == Some(&f64::NEG_INFINITY));
        if let Some(m) = first(-1) {
            for i in (1..m.points.len()).rev() {
                out.push((-1, m.taus[i], m.points[i]));
            }
        }
        out.push((1, f64::NEG_INFINITY, self.saddle));
        if let Some(pl) = first(1) {
            for i in 1..pl.points.len() {
                out.push((1, pl.taus[i], pl.points[i]));
            }
        }
        out
    }
}

fn turn_angle(a: &Point, b: &Point, c: &Point) -> f64 {
    let u = (b.x - a.x, b.y - a.y);
    let v = (c.x - b.x, c.y - b.y);
    let cross = u.0 * v.1 - u.1 * v.0;
    let dot = u.0 * v.0 + u.1 * v.1;
    cross.abs().atan2(dot)
}

fn finite(p: &Point) -> bool {
    p.x.is_finite() && p.y.is_finite() && p.x.abs() < FAR && p.y.abs() < FAR
}

/// Grows both branches of `W^s` or `W^u` of the period-1 saddle.
pub fn grow_manifold(p: &MapParams, saddle: &PeriodicOrbit, kind: ManifoldKind, cfg: &GrowthConfig) -> Result<ManifoldCurve> {
    if saddle.period != 1 {
        return Err(HblError::InvalidInput("manifold growth expects a fixed point".into()));
    }
    if !saddle.is_saddle() {
        return Err(HblError::NonSaddle);
    }
    if kind == ManifoldKind::Stable && !p.is_standard() {
        return Err(HblError::InverseUnavailable);
    }
    let s0 = saddle.points[0];
    let j = p.jacobian(&s0);
    let lam = match kind {
        ManifoldKind::Unstable => saddle.multipliers[0].re,
        ManifoldKind::Stable => saddle.multipliers[1].re,
    };
    // eigenvector of [[m00, m01], [m10, m11]] for lam
    let (vx, vy) = if j.m[1][0].abs() > 0.0 {
        (lam - j.m[1][1], j.m[1][0])
    } else {
        (j.m[0][1], lam - j.m[0][0])
    };
    let nv = vx.hypot(vy);
    let mult = match kind {
        ManifoldKind::Unstable => lam,
        ManifoldKind::Stable => 1.0 / lam,
    };
    let mut curve = ManifoldCurve {
        saddle: s0,
        kind,
        multiplier: mult,
        eigenvector: (vx / nv, vy / nv),
        cfg: *cfg,
        pieces: Vec::new(),
        generation: 0.0,
        in_window_length: 0.0,
        stats: RefinementStats::default(),
        map: p.clone(),
    };
    let (pieces, total, reached, stats) = grow_branches(&curve);
    curve.pieces = pieces;
    curve.generation = reached;
    curve.stats = stats;
    curve.in_window_length = total;
    Ok(curve)
}

struct Sweep<'a> {
    c: &'a ManifoldCurve,
    beta: i8,
    target: f64,
    arc: f64,
    len: f64,
    stats: RefinementStats,
    pieces: Vec<Piece>,
}

impl Sweep<'_> {
    fn push(&mut self, cur: &mut Piece, a: &Point, tau_a: f64, b: &Point, tau_b: f64) {
        let w = &self.c.cfg.window;
        let (a_in, b_in) = (w.contains(a), w.contains(b));
        if a_in && b_in {
            let d = dist(a, b);
            self.arc += d;
            self.len += d;
        }
        if a_in || b_in {
            if cur.points.is_empty() {
                cur.taus.push(tau_a);
                cur.points.push(*a);
                cur.arclength.push(self.arc);
            }
            cur.taus.push(tau_b);
            cur.points.push(*b);
            cur.arclength.push(self.arc);
        } else {
            self.close(cur);
        }
    }

    fn close(&mut self, cur: &mut Piece) {
        if cur.points.len() >= 2 {
            let empty = Piece { branch: self.beta, taus: vec![], points: vec![], arclength: vec![] };
            self.pieces.push(std::mem::replace(cur, empty));
        } else {
            cur.taus.clear();
            cur.points.clear();
            cur.arclength.clear();
        }
    }

    /// Adaptive samples on `[t0, t1]` starting from the known vertex
    /// `(start, t0)`. Returns the parameter where sampling stopped.
    fn run(&mut self, start: Point, t0: f64, t1: f64, stop_on_exit: bool) -> f64 {
        let c = self.c;
        let cfg = &c.cfg;
        let w = &cfg.window;
        let mut cur = Piece { branch: self.beta, taus: vec![], points: vec![], arclength: vec![] };
        let mut prev_prev: Option<Point> = None;
        let mut prev = start;
        let mut tau = t0;
        let mut dtau: f64 = if t0.is_finite() { 1e-9 } else { 1e-3 };
        if !t0.is_finite() {
            // leave the saddle onto the fundamental domain
            let p0 = c.point_at(self.beta, 0.0);
            self.stats.evaluations += 1;
            self.push(&mut cur, &prev, t0, &p0, 0.0);
            prev_prev = Some(prev);
            prev = p0;
            tau = 0.0;
        }
        while tau < t1 && self.len < self.target {
            if self.stats.evaluations >= EVAL_BUDGET {
                self.stats.precision_stops += 1;
                break;
            }
            let mut step = dtau.min(0.02).min(t1 - tau);
            let (next, next_tau) = loop {
                let nt = if tau + step >= t1 { t1 } else { tau + step };
                let np = c.point_at(self.beta, nt);
                self.stats.evaluations += 1;
                if !finite(&prev) || !finite(&np) {
                    break (np, nt);
                }
                let d = dist(&prev, &np);
                let dw = w.distance(&prev).min(w.distance(&np));
                let ang = match prev_prev {
                    Some(pp) if finite(&pp) => turn_angle(&pp, &prev, &np),
                    _ => 0.0,
                };
                // below the floor spacing the turn angle is rounding noise
                let ok = if dw <= 0.0 {
                    d <= cfg.h_max && (ang <= cfg.theta_max || d <= 1e-3 * cfg.h_max)
                } else {
                    d <= cfg.h_max.max(0.5 * dw) && (ang <= 0.3 || d <= cfg.h_max)
                };
                if ok {
                    break (np, nt);
                }
                self.stats.rejected += 1;
                step *= 0.5;
                if step <= 4.0 * f64::EPSILON * tau.abs().max(1.0) {
                    self.stats.forced += 1;
                    break (np, nt);
                }
            };
            if next_tau <= tau {
                self.stats.precision_stops += 1;
                break;
            }
            if finite(&next) && finite(&prev) {
                self.push(&mut cur, &prev, tau, &next, next_tau);
            } else {
                self.close(&mut cur);
            }
            dtau = (next_tau - tau) * 1.5;
            prev_prev = Some(prev);
            prev = next;
            tau = next_tau;
            if stop_on_exit && !w.contains(&next) {
                break;
            }
        }
        self.close(&mut cur);
        tau
    }
}

/// Whether `g(z)` can lie in the window; a smooth necessary condition so
/// that runs of source vertices do not skip an entry.
fn in_reach(c: &ManifoldCurve, z: &Point) -> bool {
    let w = &c.cfg.window;
    match c.kind {
        ManifoldKind::Unstable => w.distance(&c.map.step(z)) < 0.5,
        ManifoldKind::Stable => {
            let x_new = z.y / (c.map.sigma() * c.map.sqrt_b());
            x_new >= w.x0 - 0.05 && x_new <= w.x1 + 0.05
        }
    }
}

/// Grows both branches. The first sweep from the saddle follows each branch
/// until it leaves the window; after that the in-window pieces of each
/// unit parameter interval are the `g`-images of the previous interval's,
/// so only the stretches whose images can enter the window are swept.
fn grow_branches(c: &ManifoldCurve) -> (Vec<Piece>, f64, f64, RefinementStats) {
    let cap = c.cfg.gen_cap;
    let target = c.cfg.target_arclength;
    let mut sw = Sweep { c, beta: 1, target: 0.5 * target, arc: 0.0, len: 0.0, stats: RefinementStats::default(), pieces: Vec::new() };
    let mut exits = [0.0; 2];
    for (k, beta) in [1i8, -1].into_iter().enumerate() {
        sw.beta = beta;
        exits[k] = sw.run(c.saddle, f64::NEG_INFINITY, cap, true);
        sw.target = target;
    }
    // bring both branches to a common parameter so levels stay in step
    let top = exits[0].max(exits[1]);
    for (k, beta) in [1i8, -1].into_iter().enumerate() {
        if exits[k] < top && sw.len < target {
            sw.beta = beta;
            let start = c.point_at(beta, exits[k]);
            sw.run(start, exits[k], top, false);
        }
    }
    // g(P_beta(tau)) = P_{-beta}(tau + 1) when the multiplier is negative
    let flip = if c.multiplier < 0.0 { -1 } else { 1 };
    let mut lo = top - 1.0;
    let mut sources: Vec<Piece> = sw.pieces.clone();
    let mut reached = top;
    'levels: while sw.len < target && lo + 1.0 < cap && !sources.is_empty() {
        let before = sw.pieces.len();
        for src in &sources {
            let n = src.points.len();
            let ok: Vec<bool> = (0..n)
                .map(|i| src.taus[i] >= lo && src.taus[i] <= lo + 1.0 && in_reach(c, &src.points[i]))
                .collect();
            sw.beta = src.branch * flip;
            let mut i = 0;
            while i < n {
                if !ok[i] {
                    i += 1;
                    continue;
                }
                let mut j = i;
                while j + 1 < n && ok[j + 1] {
                    j += 1;
                }
                let a = i.saturating_sub(1);
                let b = (j + 1).min(n - 1);
                let (ta, tb) = (src.taus[a].max(lo), src.taus[b].min(lo + 1.0));
                if ta.is_finite() && tb > ta {
                    let start = c.point_at(sw.beta, ta + 1.0);
                    sw.stats.evaluations += 1;
                    let end = sw.run(start, ta + 1.0, (tb + 1.0).min(cap), false);
                    reached = reached.max(end);
                }
                if sw.len >= target {
                    break 'levels;
                }
                i = j + 1;
            }
        }
        sources = sw.pieces[before..].to_vec();
        lo += 1.0;
    }
    (sw.pieces, sw.len, reached, sw.stats)
}
