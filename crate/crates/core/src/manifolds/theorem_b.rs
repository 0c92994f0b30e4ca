//! Transversality audit at the first tangency: every stable/unstable
//! crossing of the fixed saddles away from the tangency orbit.

use serde::{Deserialize, Serialize};

use super::grow::{grow_manifold, GrowthConfig, ManifoldCurve, ManifoldKind};
use super::intersect::{find_intersections_with, IntersectionPoint, THETA_TRANSVERSE};
use super::tangency::TangencyReport;
use crate::error::Result;
use crate::geometry::{dist, Rect};
use crate::periodic::fixed_points;
use crate::{MapParams, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditBConfig {
    pub theta_transverse: f64,
    /// Exclusion radius around the tangency orbit; `None` means `10 h_max`.
    pub r_tube: Option<f64>,
    pub window: Rect,
    pub unstable: GrowthConfig,
    pub stable: GrowthConfig,
}

impl Default for AuditBConfig {
    fn default() -> Self {
        Self {
            theta_transverse: THETA_TRANSVERSE,
            r_tube: None,
            window: Rect::working(),
            unstable: GrowthConfig::unstable_default(),
            stable: GrowthConfig::stable_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledIntersection {
    /// e.g. `"Ws(Q) x Wu(P)"`.
    pub pair: String,
    #[serde(flatten)]
    pub point: IntersectionPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremBReport {
    pub a: f64,
    pub b: f64,
    pub zeta0: Point,
    pub zeta0_angle: f64,
    pub tangency_orbit: Vec<Point>,
    pub r_tube: f64,
    pub theta_transverse: f64,
    pub n_intersections: usize,
    pub n_excluded: usize,
    pub min_angle: Option<f64>,
    pub violations: Vec<LabelledIntersection>,
    pub excluded: Vec<LabelledIntersection>,
}

impl TheoremBReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Nearest `(branch, tau)` on `c` to `z` among stored vertices.
fn nearest_param(c: &ManifoldCurve, z: &Point) -> Option<(i8, f64)> {
    c.pieces
        .iter()
        .flat_map(|p| p.points.iter().zip(&p.taus).map(move |(q, t)| (dist(q, z), p.branch, *t)))
        .filter(|v| v.2.is_finite())
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|v| (v.1, v.2))
}

/// Orbit of the tangency point: backward along the unstable curve's own
/// parametrization, forward by iteration until it settles on `Q`.
pub fn tangency_orbit(p: &MapParams, wu: &ManifoldCurve, q: &Point, zeta0: &Point) -> Vec<Point> {
    let mut orbit = vec![*zeta0];
    if let Some((beta, tau)) = nearest_param(wu, zeta0) {
        let flip: i8 = if wu.multiplier < 0.0 { -1 } else { 1 };
        let (mut b, mut t) = (beta, tau);
        while t - 1.0 >= 0.0 {
            t -= 1.0;
            b *= flip;
            orbit.push(wu.point_at(b, t));
        }
        orbit.push(wu.saddle);
    }
    let mut z = *zeta0;
    let mut d = dist(&z, q);
    for _ in 0..200 {
        let w = p.step(&z);
        let dw = dist(&w, q);
        orbit.push(w);
        if dw >= d && dw < 0.1 {
            break;
        }
        z = w;
        d = dw;
    }
    orbit.push(*q);
    orbit
}

pub fn audit_theorem_b(p: &MapParams, tangency: &TangencyReport, cfg: &AuditBConfig) -> Result<TheoremBReport> {
    let fs = fixed_points(p)?;
    let saddles = [("P", &fs.p), ("Q", &fs.q)];
    let mut unstable = Vec::new();
    let mut stable = Vec::new();
    for (name, s) in saddles {
        unstable.push((name, grow_manifold(p, s, ManifoldKind::Unstable, &cfg.unstable)?));
        stable.push((name, grow_manifold(p, s, ManifoldKind::Stable, &cfg.stable)?));
    }
    let r_tube = cfg.r_tube.unwrap_or(10.0 * cfg.unstable.h_max);
    let q = fs.q.points[0];
    let zeta0 = tangency.tangency_point;
    let wu_t = match p.orientation {
        crate::Orientation::Plus => &unstable[1].1,
        crate::Orientation::Minus => &unstable[0].1,
    };
    let orbit = tangency_orbit(p, wu_t, &q, &zeta0);

    let mut report = TheoremBReport {
        a: p.a,
        b: p.b,
        zeta0,
        zeta0_angle: tangency.residual_angle,
        tangency_orbit: orbit.clone(),
        r_tube,
        theta_transverse: cfg.theta_transverse,
        n_intersections: 0,
        n_excluded: 0,
        min_angle: None,
        violations: Vec::new(),
        excluded: Vec::new(),
    };
    for (sn, ws) in &stable {
        for (un, wu) in &unstable {
            let pair = format!("Ws({sn}) x Wu({un})");
            for x in find_intersections_with(ws, wu, &cfg.window, cfg.theta_transverse) {
                report.n_intersections += 1;
                let item = LabelledIntersection { pair: pair.clone(), point: x };
                if orbit.iter().any(|o| dist(o, &x.location) < r_tube) {
                    report.n_excluded += 1;
                    report.excluded.push(item);
                    continue;
                }
                report.min_angle = Some(report.min_angle.map_or(x.angle, |m: f64| m.min(x.angle)));
                if !x.transverse {
                    report.violations.push(item);
                }
            }
        }
    }
    Ok(report)
}
