use serde::{Deserialize, Serialize};

use crate::error::{HblError, Result};
use crate::geometry::Rect;
use crate::periodic::{orbit_exponents, PeriodicOrbit};
use crate::{MapParams, Point, TangentVec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub chi_u: f64,
    pub chi_s: f64,
    pub n_steps: usize,
    /// `(step, running chi_u)` every `HISTORY_EVERY` steps.
    pub history: Vec<(usize, f64)>,
    pub converged: bool,
    pub short_run: bool,
    /// Birkhoff average along a finite segment, not a measure-theoretic exponent.
    pub empirical: bool,
}

pub const HISTORY_EVERY: usize = 1000;
pub const CONVERGENCE_TOL: f64 = 1e-7;

/// One QR step: pushes the unit vector `e` through `j`, returns the new
/// vector and `log r11`. In two dimensions `r22 = |det| / r11`.
#[inline]
fn qr_step(j: &crate::Jacobian2x2, e: (f64, f64)) -> ((f64, f64), f64) {
    let v = j.apply(e.0, e.1);
    let r = v.0.hypot(v.1);
    ((v.0 / r, v.1 / r), r.ln())
}

/// Discrete QR exponents along the orbit of `z` for `n` steps.
pub fn qr_exponents(p: &MapParams, z: Point, n: usize) -> Result<ExponentEstimate> {
    qr_exponents_in(p, z, n, &Rect::working())
}

pub fn qr_exponents_in(p: &MapParams, z: Point, n: usize, rect: &Rect) -> Result<ExponentEstimate> {
    if !(z.x.is_finite() && z.y.is_finite()) {
        return Err(HblError::NonFinite);
    }
    let mut cur = z;
    let mut e = (1.0, 0.0);
    let (mut su, mut sdet) = (0.0, 0.0);
    let mut history = Vec::new();
    for k in 1..=n {
        if !rect.contains(&cur) {
            return Err(HblError::Escaped { index: k - 1 });
        }
        let j = p.jacobian(&cur);
        let (ne, lr) = qr_step(&j, e);
        e = ne;
        su += lr;
        sdet += j.det.abs().ln();
        cur = p.step(&cur);
        if k % HISTORY_EVERY == 0 {
            history.push((k, su / k as f64));
        }
    }
    let nn = n.max(1) as f64;
    let converged = match history.as_slice() {
        [.., (_, prev), (_, last)] => (last - prev).abs() < CONVERGENCE_TOL,
        _ => false,
    };
    Ok(ExponentEstimate {
        chi_u: su / nn,
        chi_s: (sdet - su) / nn,
        n_steps: n,
        history,
        converged,
        short_run: n < 100,
        empirical: true,
    })
}

/// QR exponents along a stored cycle, accumulated over `cycles` full periods
/// after the frame has aligned with the unstable direction.
pub fn qr_exponents_cycle(p: &MapParams, o: &PeriodicOrbit, cycles: usize) -> ExponentEstimate {
    let n = o.points.len();
    let nrm = 1.0_f64.hypot(0.3);
    let mut e = (1.0 / nrm, 0.3 / nrm);
    for _ in 0..200 {
        let prev = e;
        for z in &o.points {
            e = qr_step(&p.jacobian(z), e).0;
        }
        if (prev.0 * e.1 - prev.1 * e.0).abs() < 1e-16 {
            break;
        }
    }
    let (mut su, mut sdet) = (0.0, 0.0);
    let mut history = Vec::new();
    let mut k = 0;
    for _ in 0..cycles {
        for z in &o.points {
            let j = p.jacobian(z);
            let (ne, lr) = qr_step(&j, e);
            e = ne;
            su += lr;
            sdet += j.det.abs().ln();
            k += 1;
            if k % HISTORY_EVERY == 0 {
                history.push((k, su / k as f64));
            }
        }
    }
    let steps = (cycles * n).max(1) as f64;
    ExponentEstimate {
        chi_u: su / steps,
        chi_s: (sdet - su) / steps,
        n_steps: cycles * n,
        history,
        converged: true,
        short_run: cycles * n < 100,
        empirical: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnstableDirection {
    pub base: Point,
    pub direction: TangentVec,
    pub pullback_depth: usize,
    pub residual: f64,
    pub converged: bool,
}

pub const EU_TOL: f64 = 1e-10;

fn push_forward(p: &MapParams, back: &[Point], v0: (f64, f64)) -> (f64, f64) {
    // back[0] = z_{-m}, ..., back[m] = z
    let mut v = v0;
    for z in &back[..back.len() - 1] {
        v = p.jacobian(z).apply(v.0, v.1);
        let r = v.0.hypot(v.1);
        v = (v.0 / r, v.1 / r);
    }
    if v.0 < 0.0 || (v.0 == 0.0 && v.1 < 0.0) {
        v = (-v.0, -v.1);
    }
    v
}

fn line_change(u: (f64, f64), v: (f64, f64)) -> f64 {
    (u.0 * v.1 - u.1 * v.0).abs().atan2((u.0 * v.0 + u.1 * v.1).abs())
}

/// `E^u(z)` by pulling `z` back and pushing a generic vector forward,
/// increasing the depth one step at a time up to `depth_cap`.
pub fn estimate_eu(p: &MapParams, z: Point, depth_cap: usize) -> Result<UnstableDirection> {
    estimate_eu_with(p, z, depth_cap, (0.6, 0.8))
}

pub fn estimate_eu_with(p: &MapParams, z: Point, depth_cap: usize, v0: (f64, f64)) -> Result<UnstableDirection> {
    if !p.is_standard() {
        return Err(HblError::InverseUnavailable);
    }
    let rect = Rect::working();
    let mut back = vec![z];
    let mut prev = push_forward(p, &back, v0);
    for m in 1..=depth_cap.max(1) {
        let w = p.apply_inverse(&back[0])?;
        if !rect.contains(&w) {
            return Err(HblError::NotInBoundedSet { index: m });
        }
        back.insert(0, w);
        let cur = push_forward(p, &back, v0);
        let res = line_change(prev, cur);
        if res < EU_TOL {
            return Ok(UnstableDirection {
                base: z,
                direction: TangentVec::new(cur.0, cur.1, z),
                pullback_depth: m,
                residual: res,
                converged: true,
            });
        }
        prev = cur;
        if m == depth_cap {
            return Ok(UnstableDirection {
                base: z,
                direction: TangentVec::new(cur.0, cur.1, z),
                pullback_depth: m,
                residual: res,
                converged: false,
            });
        }
    }
    unreachable!()
}

/// `E^u` at the last point of a stored orbit segment `seg` (oldest first),
/// using successively longer tails of the segment.
pub fn estimate_eu_along(p: &MapParams, seg: &[Point], v0: (f64, f64)) -> Result<UnstableDirection> {
    let z = *seg.last().ok_or(HblError::InvalidInput("empty segment".into()))?;
    let mut prev = push_forward(p, &seg[seg.len() - 1..], v0);
    let mut last = (prev, f64::INFINITY, 0);
    for m in 1..seg.len() {
        let cur = push_forward(p, &seg[seg.len() - 1 - m..], v0);
        let res = line_change(prev, cur);
        last = (cur, res, m);
        if res < EU_TOL {
            break;
        }
        prev = cur;
    }
    let (dir, res, m) = last;
    Ok(UnstableDirection {
        base: z,
        direction: TangentVec::new(dir.0, dir.1, z),
        pullback_depth: m,
        residual: res,
        converged: res < EU_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bars {
    pub chi_u_bar: f64,
    pub chi_s_bar: f64,
}

impl Bars {
    pub fn for_b(b: f64) -> Self {
        Self { chi_u_bar: 0.25 * 2f64.ln(), chi_s_bar: b.ln() / 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub period: usize,
    pub point: Point,
    pub chi_s: Option<f64>,
    pub chi_u: Option<f64>,
    pub reason: String,
    pub margin_u: Option<f64>,
    pub margin_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremAReport {
    pub a: f64,
    pub b: f64,
    pub n_orbits: usize,
    pub violations: Vec<Violation>,
    pub min_chi_u: f64,
    pub max_chi_s: f64,
    pub bars: Bars,
    pub note: String,
}

impl TheoremAReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn audit_theorem_a(p: &MapParams, orbits: &[PeriodicOrbit]) -> TheoremAReport {
    let bars = Bars::for_b(p.b);
    let mut violations = Vec::new();
    let (mut min_u, mut max_s) = (f64::INFINITY, f64::NEG_INFINITY);
    for o in orbits {
        match orbit_exponents(o) {
            Ok(e) => {
                min_u = min_u.min(e.chi_u);
                max_s = max_s.max(e.chi_s);
                let (mu, ms) = (e.chi_u - bars.chi_u_bar, bars.chi_s_bar - e.chi_s);
                if mu <= 0.0 || ms <= 0.0 {
                    violations.push(Violation {
                        period: o.period,
                        point: o.points[0],
                        chi_s: Some(e.chi_s),
                        chi_u: Some(e.chi_u),
                        reason: "exponent bar".into(),
                        margin_u: Some(mu),
                        margin_s: Some(ms),
                    });
                }
            }
            Err(err) => violations.push(Violation {
                period: o.period,
                point: o.points[0],
                chi_s: None,
                chi_u: None,
                reason: err.to_string(),
                margin_u: None,
                margin_s: None,
            }),
        }
    }
    TheoremAReport {
        a: p.a,
        b: p.b,
        n_orbits: orbits.len(),
        violations,
        min_chi_u: min_u,
        max_chi_s: max_s,
        bars,
        note: "periodic-orbit measures only: a falsification harness over a proper subfamily of ergodic measures".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::periodic::fixed_points;
    use crate::Orientation;

    #[test]
    fn bars() {
        let b = Bars::for_b(1e-3);
        assert!((b.chi_u_bar - 0.173_286_795_1).abs() < 1e-9);
        assert!((b.chi_s_bar + 2.302_585_093).abs() < 1e-9);
    }

    #[test]
    fn cycle_exponents_match_multipliers() {
        let p = MapParams::new(2.0, 1e-4, Orientation::Plus).unwrap();
        let fs = fixed_points(&p).unwrap();
        let e = qr_exponents_cycle(&p, &fs.q, 1000);
        let o = orbit_exponents(&fs.q).unwrap();
        assert!((e.chi_u - o.chi_u).abs() < 1e-8);
        assert!((e.chi_s + e.chi_u - p.b.ln()).abs() < 1e-6);
    }

    #[test]
    fn eu_at_q_is_eigenvector() {
        let p = MapParams::new(2.0, 1e-4, Orientation::Plus).unwrap();
        let q = fixed_points(&p).unwrap().q;
        let d = estimate_eu(&p, q.points[0], 64).unwrap();
        assert!(d.converged);
        let j = p.jacobian(&q.points[0]);
        let l = q.multipliers[0].re;
        // eigenvector of [[m00, m01],[m10, 0]] for l: (l, m10)
        let (ex, ey) = (l, j.m[1][0]);
        let n = ex.hypot(ey);
        assert!(line_change((ex / n, ey / n), (d.direction.xi, d.direction.eta)) < 1e-8);
    }

    #[test]
    fn short_run_flag() {
        let p = MapParams::new(1.4, 0.3, Orientation::Minus).unwrap();
        let e = qr_exponents(&p, Point::new(0.1, 0.0), 50).unwrap();
        assert!(e.short_run);
    }
}
