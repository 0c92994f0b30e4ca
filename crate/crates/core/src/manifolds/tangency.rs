//! First-tangency parameter: the value of `a` where the topmost unstable
//! line through the critical strip touches the vertex of the stable fold arc.

use serde::{Deserialize, Serialize};

use super::grow::{grow_manifold, GrowthConfig, ManifoldCurve, ManifoldKind};
use super::stable_graph::StableGraphs;
use crate::error::{HblError, Result};
use crate::geometry::line_angle;
use crate::periodic::fixed_points;
use crate::{MapParams, Orientation, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TangencyKind {
    Homoclinic,
    Heteroclinic,
}

impl TangencyKind {
    pub fn for_orientation(o: Orientation) -> Self {
        match o {
            Orientation::Plus => Self::Homoclinic,
            Orientation::Minus => Self::Heteroclinic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    pub b: f64,
    pub orientation: Orientation,
    pub a_star: f64,
    pub bracket: [f64; 2],
    pub bracket_width: f64,
    pub tangency_point: Point,
    pub tangency_kind: TangencyKind,
    pub residual_angle: f64,
    pub evaluations: usize,
}

/// `g(a)` at one parameter together with where the extremum sits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldGap {
    pub a: f64,
    /// Positive once every unstable line crossing `x = 0` dips below the
    /// fold vertex ("separated"); negative while one passes above it.
    pub g: f64,
    pub closest: Point,
    pub angle: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangencyConfig {
    pub delta: f64,
    pub tol: f64,
    pub gen_cap: f64,
    pub target_arclength: f64,
}

impl Default for TangencyConfig {
    fn default() -> Self {
        Self { delta: 0.1, tol: 1e-6, gen_cap: 40.0, target_arclength: 12.0 }
    }
}

/// The unstable curve relevant for the first tangency: `W^u(Q)` for
/// orientation-preserving maps, `W^u(P)` otherwise.
pub fn relevant_unstable(p: &MapParams, cfg: &TangencyConfig) -> Result<ManifoldCurve> {
    let fs = fixed_points(p)?;
    let saddle = match p.orientation {
        Orientation::Plus => &fs.q,
        Orientation::Minus => &fs.p,
    };
    let mut gc = GrowthConfig::unstable_default();
    gc.gen_cap = cfg.gen_cap;
    gc.target_arclength = cfg.target_arclength;
    grow_manifold(p, saddle, ManifoldKind::Unstable, &gc)
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

pub fn fold_gap(p: &MapParams, cfg: &TangencyConfig) -> Result<FoldGap> {
    let graphs = StableGraphs::new(p)?;
    let wu = relevant_unstable(p, cfg)?;
    let xw = 3.0 * cfg.delta;
    let gap = |z: &Point| graphs.fold_arc(z.x) - z.y;
    let mut best: Option<(f64, i8, f64)> = None;
    let mut runs = 0;
    for piece in &wu.pieces {
        let n = piece.points.len();
        let mut i = 0;
        while i < n {
            if piece.points[i].x.abs() >= xw {
                i += 1;
                continue;
            }
            let mut j = i;
            while j + 1 < n && piece.points[j + 1].x.abs() < xw {
                j += 1;
            }
            let run = &piece.points[i..=j];
            let spans = run.iter().any(|z| z.x < 0.0) && run.iter().any(|z| z.x > 0.0);
            if spans {
                runs += 1;
                let k = (i..=j).max_by(|&u, &v| gap(&piece.points[u]).total_cmp(&gap(&piece.points[v]))).unwrap();
                let (lo, hi) = (piece.taus[k.saturating_sub(1).max(i)], piece.taus[(k + 1).min(j)]);
                let beta = piece.branch;
                let t = if lo.is_finite() && hi > lo {
                    golden_max(|t| gap(&wu.point_at(beta, t)), lo, hi)
                } else {
                    piece.taus[k]
                };
                let v = gap(&wu.point_at(beta, t));
                if best.is_none_or(|(bv, _, _)| v < bv) {
                    best = Some((v, beta, t));
                }
            }
            i = j + 1;
        }
    }
    let (g, beta, t) = best.ok_or_else(|| HblError::FoldNotFound(format!("no unstable arc spans |x| < {xw} at a = {}", p.a)))?;
    let closest = wu.point_at(beta, t);
    let tu = wu.tangent_at(beta, t);
    let ts = (1.0, graphs.fold_arc_slope(closest.x));
    Ok(FoldGap { a: p.a, g, closest, angle: line_angle(tu, ts), runs })
}

/// Bisects `g` on `bracket` until its width is at most `cfg.tol`.
pub fn locate_a_star(b: f64, orientation: Orientation, bracket: [f64; 2], cfg: &TangencyConfig) -> Result<TangencyReport> {
    let at = |a: f64| -> Result<FoldGap> { fold_gap(&MapParams::new(a, b, orientation)?, cfg) };
    let (mut lo, mut hi) = (bracket[0], bracket[1]);
    let (glo, ghi) = (at(lo)?, at(hi)?);
    let mut evaluations = 2;
    if !(glo.g < 0.0 && ghi.g > 0.0) {
        return Err(HblError::BracketInvalid { a_lo: lo, a_hi: hi, g_lo: glo.g, g_hi: ghi.g });
    }
    let mut last_hi = ghi;
    while hi - lo > cfg.tol {
        let mid = 0.5 * (lo + hi);
        let gm = at(mid)?;
        evaluations += 1;
        if gm.g > 0.0 {
            hi = mid;
            last_hi = gm;
        } else {
            lo = mid;
        }
    }
    let a_star = 0.5 * (lo + hi);
    let fin = at(a_star).unwrap_or(last_hi);
    evaluations += 1;
    Ok(TangencyReport {
        b,
        orientation,
        a_star,
        bracket: [lo, hi],
        bracket_width: hi - lo,
        tangency_point: fin.closest,
        tangency_kind: TangencyKind::for_orientation(orientation),
        residual_angle: fin.angle,
        evaluations,
    })
}
