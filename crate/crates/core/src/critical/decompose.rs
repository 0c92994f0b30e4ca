//! Bound/free decomposition of orbit segments against a cache of
//! critical points on the unstable manifold.

use serde::{Deserialize, Serialize};

use super::{bound_period_along, find_critical_point, jacobian_nf, AnalysisConstants, CriticalPointApprox, PolylineArc};
use crate::error::{HblError, Result};
use crate::manifolds::ManifoldCurve;
use crate::{MapParams, Point};

/// One unstable leaf crossing the strip, with its critical point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub run: Vec<Point>,
    pub critical: CriticalPointApprox,
    /// Unit tangent of the leaf at the critical point (original coordinates).
    pub tangent: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalCache {
    pub a: f64,
    pub b: f64,
    pub order: usize,
    pub entries: Vec<CacheEntry>,
    /// Leaves on which no unique critical point was found.
    pub skipped: usize,
}

pub const CACHE_ORDER: usize = 6;

impl CriticalCache {
    /// Critical points of order `order` on every run of `wu` that crosses
    /// the strip `|x| < delta` inside `|y| <= 1.05 sqrt(b)`.
    pub fn build(p: &MapParams, k: &AnalysisConstants, wu: &ManifoldCurve, order: usize) -> Self {
        let ymax = 1.05 * p.sqrt_b();
        let inside = |z: &Point| z.x.abs() < k.delta && z.y.abs() <= ymax;
        let mut runs: Vec<Vec<Point>> = Vec::new();
        for pc in &wu.pieces {
            let mut i = 0;
            let n = pc.points.len();
            while i < n {
                if !inside(&pc.points[i]) {
                    i += 1;
                    continue;
                }
                let mut j = i;
                while j + 1 < n && inside(&pc.points[j + 1]) {
                    j += 1;
                }
                // one vertex past each end so the leaf spans the whole strip
                let run = &pc.points[i.saturating_sub(1)..=(j + 1).min(n - 1)];
                let spans = run.iter().any(|z| z.x < -0.5 * k.delta) && run.iter().any(|z| z.x > 0.5 * k.delta);
                if spans && run.len() >= 3 {
                    let mut r = run.to_vec();
                    if r[0].x > r[r.len() - 1].x {
                        r.reverse();
                    }
                    runs.push(r);
                }
                i = j + 1;
            }
        }
        runs.sort_by(|a, b| a[a.len() / 2].y.total_cmp(&b[b.len() / 2].y));
        let found: Vec<Option<CacheEntry>> = {
            use rayon::prelude::*;
            runs.into_par_iter()
                .enumerate()
                .map(|(id, run)| {
                    let arc = PolylineArc::new(run.clone()).ok()?;
                    let c = find_critical_point(p, k, &arc, order, id).ok()?;
                    let tangent = super::Arc::tangent(&arc, c.s);
                    Some(CacheEntry { run, critical: c, tangent })
                })
                .collect()
        };
        let skipped = found.iter().filter(|e| e.is_none()).count();
        let mut entries: Vec<CacheEntry> = found.into_iter().flatten().collect();
        for (i, e) in entries.iter_mut().enumerate() {
            e.critical.segment_id = i;
        }
        Self { a: p.a, b: p.b, order, entries, skipped }
    }

    /// Vertical normal-form distance from `z` to each leaf at abscissa `z.x`;
    /// returns the closest leaf and that distance.
    pub fn pair(&self, p: &MapParams, z: &Point) -> Option<(usize, f64)> {
        let sb = p.sqrt_b();
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| leaf_height(&e.run, z.x).map(|y| (i, sb * (z.y - y).abs())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Height of the (graph-like) leaf at abscissa `x`, if it spans `x`.
fn leaf_height(run: &[Point], x: f64) -> Option<f64> {
    if x < run[0].x || x > run[run.len() - 1].x {
        return None;
    }
    let i = run.partition_point(|z| z.x <= x).clamp(1, run.len() - 1);
    let (a, b) = (run[i - 1], run[i]);
    let t = if b.x == a.x { 0.0 } else { (x - a.x) / (b.x - a.x) };
    Some(a.y + t * (b.y - a.y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecomposeConfig {
    pub k_max: usize,
    pub p_max: usize,
    /// `C` in the depth rule `d_v <= C b^{k/2}`.
    pub depth_const: f64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self { k_max: 30, p_max: super::P_MAX, depth_const: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeReturn {
    pub n: usize,
    pub k: usize,
    pub p: usize,
    /// `log |w_n(x)|` and the bound `(lambda/3)(n-1)`.
    pub log_w: f64,
    pub log_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "nu", rename_all = "snake_case")]
pub enum Verdict {
    Controlled,
    CloseReturnAt(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFreeDecomposition {
    pub x0: Point,
    pub returns: Vec<FreeReturn>,
    pub close_returns: Vec<usize>,
    pub controlled_up_to: usize,
    pub verdict: Verdict,
}

impl BoundFreeDecomposition {
    /// Free returns violating `|w_n| >= e^{(lambda/3)(n-1)}`.
    pub fn conduir_violations(&self) -> usize {
        self.returns.iter().filter(|r| r.log_w < r.log_bound).count()
    }

    /// Consecutive close returns with `nu_{l+1} < 2 nu_l`.
    pub fn doubling_violations(&self) -> usize {
        self.close_returns.windows(2).filter(|w| w[1] < 2 * w[0]).count()
    }

    pub fn ordered(&self) -> bool {
        self.returns.windows(2).all(|w| w[0].n < w[0].n + w[0].p && w[0].n + w[0].p <= w[1].n)
    }
}

/// Largest `k <= cap` with `d <= C b^{k/2}`.
fn depth(d: f64, b: f64, c: f64, cap: usize) -> usize {
    if d <= 0.0 {
        return cap;
    }
    let k = (2.0 * (d / c).ln() / b.ln()).floor();
    if k < 0.0 {
        0
    } else {
        (k as usize).min(cap)
    }
}

/// Decomposes the stored orbit segment `orbit` (`orbit[n] = f^n x`).
pub fn decompose_orbit(
    p: &MapParams,
    k: &AnalysisConstants,
    cache: &CriticalCache,
    orbit: &[Point],
    cfg: &DecomposeConfig,
) -> Result<BoundFreeDecomposition> {
    let x0 = *orbit.first().ok_or_else(|| HblError::InvalidInput("empty orbit".into()))?;
    let horizon = orbit.len() - 1;
    let strip = k.critical_region();
    let sb = p.sqrt_b();
    // log |w_n| with w_1 = (1, 0) at f x
    let mut log_w = vec![0.0; orbit.len()];
    let mut w = (1.0, 0.0);
    for n in 1..horizon {
        let v = jacobian_nf(p, &orbit[n]).apply(w.0, w.1);
        let l = v.0.hypot(v.1);
        w = (v.0 / l, v.1 / l);
        log_w[n + 1] = log_w[n] + l.ln();
    }
    let mut returns = Vec::new();
    let mut close_returns = Vec::new();
    let mut free_from = 1;
    let mut controlled_up_to = horizon;
    for n in 1..=horizon {
        let z = orbit[n];
        if !strip.in_strip(&z) {
            continue;
        }
        let (i, dv) = cache.pair(p, &z).ok_or_else(|| HblError::PairingFailed(format!("no cached leaf spans x = {} (n = {n})", z.x)))?;
        let zeta = cache.entries[i].critical.location;
        let dx = (z.x - zeta.x).abs();
        if dv > 3.0 * sb * dx {
            return Err(HblError::PairingFailed(format!(
                "n = {n}: vertical distance {dv:e} to the nearest leaf exceeds 3 sqrt(b) |dx| (dx = {dx:e})"
            )));
        }
        let kd = depth(dv, p.b, cfg.depth_const, n.min(cfg.k_max));
        if dx < k.delta.powf(n as f64 / 2.0) && kd >= n.min(cfg.k_max) {
            close_returns.push(n);
            if controlled_up_to == horizon {
                controlled_up_to = n - 1;
            }
        }
        if n < free_from {
            continue;
        }
        let mut it = orbit[n..].iter().copied();
        match bound_period_along(p, k, &mut it, cache.entries[i].tangent, cfg.p_max) {
            Ok(pb) => {
                returns.push(FreeReturn { n, k: kd, p: pb, log_w: log_w[n], log_bound: k.lambda / 3.0 * (n - 1) as f64 });
                free_from = n + pb;
            }
            // the segment ends inside this bound period
            Err(HblError::UnboundedBoundPeriod { index }) if n + index > horizon => {
                returns.push(FreeReturn { n, k: kd, p: horizon + 1 - n, log_w: log_w[n], log_bound: k.lambda / 3.0 * (n - 1) as f64 });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let verdict = match close_returns.first() {
        Some(&nu) => Verdict::CloseReturnAt(nu),
        None => Verdict::Controlled,
    };
    Ok(BoundFreeDecomposition { x0, returns, close_returns, controlled_up_to, verdict })
}
