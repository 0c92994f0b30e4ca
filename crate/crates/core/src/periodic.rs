use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HblError, Result};
use crate::geometry::{dist, Rect};
use crate::symbolic;
use crate::{Jacobian2x2, MapParams, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub re: f64,
    pub im: f64,
}

impl Multiplier {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Saddle,
    Attracting,
    Repelling,
    Elliptic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub points: Vec<Point>,
    pub period: usize,
    /// Largest modulus first.
    pub multipliers: [Multiplier; 2],
    pub classification: Classification,
    pub residual: f64,
}

impl PeriodicOrbit {
    /// Builds the orbit record from a cycle of points, computing multipliers
    /// from the chain-rule product and the exact determinant.
    pub fn from_cycle(p: &MapParams, points: Vec<Point>) -> Self {
        let n = points.len();
        let mut m = Jacobian2x2::identity();
        let mut det = 1.0;
        let mut log_scale = 0.0;
        for z in &points {
            let j = p.jacobian(z);
            det *= j.det;
            m = j.mul(&m);
            let s = m.norm();
            if s > 1e100 {
                m = m.scale(1.0 / s);
                log_scale += s.ln();
            }
        }
        let multipliers = eigenvalues(&m, det, log_scale);
        let classification = classify(&multipliers);
        let residual = symbolic::cyclic_residual(p, &points);
        PeriodicOrbit { points, period: n, multipliers, classification, residual }
    }

    pub fn is_saddle(&self) -> bool {
        self.classification == Classification::Saddle
    }
}

/// Eigenvalues of `exp(log_scale) * m` whose true determinant is `det`.
fn eigenvalues(m: &Jacobian2x2, det: f64, log_scale: f64) -> [Multiplier; 2] {
    let tr = m.trace();
    let det_scaled = det * (-2.0 * log_scale).exp();
    let disc = tr * tr - 4.0 * det_scaled;
    if disc >= 0.0 {
        let l1 = 0.5 * (tr + tr.signum() * disc.sqrt()) * log_scale.exp();
        let l2 = if l1 != 0.0 { det / l1 } else { 0.0 };
        let (l1, l2) = if l1.abs() >= l2.abs() { (l1, l2) } else { (l2, l1) };
        [Multiplier { re: l1, im: 0.0 }, Multiplier { re: l2, im: 0.0 }]
    } else {
        let s = log_scale.exp();
        let re = 0.5 * tr * s;
        let im = 0.5 * (-disc).sqrt() * s;
        [Multiplier { re, im }, Multiplier { re, im: -im }]
    }
}

pub fn classify(mult: &[Multiplier; 2]) -> Classification {
    let (m1, m2) = (mult[0].modulus(), mult[1].modulus());
    let guard = 1e-9;
    let (hi, lo) = if m1 >= m2 { (m1, m2) } else { (m2, m1) };
    if hi < 1.0 - guard {
        Classification::Attracting
    } else if lo > 1.0 + guard {
        Classification::Repelling
    } else if hi > 1.0 + guard && lo < 1.0 - guard {
        Classification::Saddle
    } else {
        Classification::Elliptic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedSaddles {
    pub p: PeriodicOrbit,
    pub q: PeriodicOrbit,
}

pub fn fixed_points(p: &MapParams) -> Result<FixedSaddles> {
    if !(1.5..=2.5).contains(&p.a) || p.b > 0.05 {
        return Err(HblError::Precondition(format!(
            "fixed_points needs a in [1.5, 2.5] and b <= 0.05 (a={}, b={})",
            p.a, p.b
        )));
    }
    let (p_pt, q_pt) = fixed_point_locations(p)?;
    let pr = refine_fixed(p, p_pt)?;
    let qr = refine_fixed(p, q_pt)?;
    let po = PeriodicOrbit::from_cycle(p, vec![pr]);
    let qo = PeriodicOrbit::from_cycle(p, vec![qr]);
    if !po.is_saddle() || !qo.is_saddle() {
        return Err(HblError::NonSaddle);
    }
    Ok(FixedSaddles { p: po, q: qo })
}

/// Roots of `a x^2 + (1 + sigma b) x - 1 = 0`, as `(P, Q)` with `P.x > 0 > Q.x`.
/// Uses the cancellation-free form of the quadratic formula.
pub fn fixed_point_locations(p: &MapParams) -> Result<(Point, Point)> {
    let (a, bb) = (p.a, 1.0 + p.sigma() * p.b);
    let disc = bb * bb + 4.0 * a;
    if disc < 0.0 || a == 0.0 {
        return Err(HblError::NoRealFixedPoints);
    }
    let qq = -0.5 * (bb + bb.signum() * disc.sqrt());
    let (r1, r2) = (qq / a, -1.0 / qq);
    let (xp, xq) = if r1 > r2 { (r1, r2) } else { (r2, r1) };
    let k = p.sigma() * p.sqrt_b();
    Ok((Point::new(xp, k * xp), Point::new(xq, k * xq)))
}

fn refine_fixed(p: &MapParams, z0: Point) -> Result<Point> {
    let mut z = z0;
    for _ in 0..50 {
        let f = p.step(&z);
        let (fx, fy) = (f.x - z.x, f.y - z.y);
        let j = p.jacobian(&z);
        let (a, b, c, d) = (j.m[0][0] - 1.0, j.m[0][1], j.m[1][0], j.m[1][1] - 1.0);
        let det = a * d - b * c;
        if det.abs() < 1e-300 {
            return Err(HblError::NonHyperbolic);
        }
        let dx = (d * fx - b * fy) / det;
        let dy = (-c * fx + a * fy) / det;
        z = Point::new(z.x - dx, z.y - dy);
        if dx.abs().max(dy.abs()) < 1e-16 {
            return Ok(z);
        }
    }
    let f = p.step(&z);
    if dist(&f, &z) < 1e-13 {
        Ok(z)
    } else {
        Err(HblError::NewtonFailed { last: z })
    }
}

const MAX_ITER: usize = 50;

/// Newton on `f^n(z) - z`, followed by a multiple-shooting polish and prime
/// period reduction.
pub fn newton_periodic(p: &MapParams, seed: Point, period: usize) -> Result<PeriodicOrbit> {
    if period == 0 {
        return Err(HblError::InvalidInput("period must be >= 1".into()));
    }
    if !(seed.x.is_finite() && seed.y.is_finite()) {
        return Err(HblError::NonFinite);
    }
    let mut z = seed;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let mut w = z;
        let mut m = Jacobian2x2::identity();
        for _ in 0..period {
            m = p.jacobian(&w).mul(&m);
            w = p.step(&w);
        }
        if !(w.x.is_finite() && w.y.is_finite() && m.norm().is_finite()) {
            return Err(HblError::NewtonFailed { last: z });
        }
        let (fx, fy) = (w.x - z.x, w.y - z.y);
        let (a, b, c, d) = (m.m[0][0] - 1.0, m.m[0][1], m.m[1][0], m.m[1][1] - 1.0);
        let det = a * d - b * c;
        let scale = (a.abs() + b.abs()) * (c.abs() + d.abs());
        if det.abs() <= 1e-13 * scale.max(1e-300) {
            return Err(HblError::NonHyperbolic);
        }
        let dx = (d * fx - b * fy) / det;
        let dy = (-c * fx + a * fy) / det;
        if !(dx.is_finite() && dy.is_finite()) {
            return Err(HblError::NewtonFailed { last: z });
        }
        // damp wild steps to stay near the seed's basin
        let step = dx.hypot(dy);
        let damp = if step > 1.0 { 1.0 / step } else { 1.0 };
        z = Point::new(z.x - damp * dx, z.y - damp * dy);
        if z.x.abs() > 1e6 || z.y.abs() > 1e6 {
            return Err(HblError::NewtonFailed { last: z });
        }
        if step < 1e-13 * (1.0 + z.x.abs() + z.y.abs()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(HblError::NewtonFailed { last: z });
    }
    let mut pts = Vec::with_capacity(period);
    let mut w = z;
    for _ in 0..period {
        pts.push(w);
        w = p.step(&w);
    }
    let pts = multiple_shooting(p, pts)?;
    let prime = prime_period(&pts);
    let pts: Vec<Point> = pts.into_iter().take(prime).collect();
    let orbit = PeriodicOrbit::from_cycle(p, canonical_rotation(pts));
    if orbit.residual >= 1e-10 {
        return Err(HblError::NewtonFailed { last: orbit.points[0] });
    }
    Ok(orbit)
}

/// Newton on the cyclic system `f(z_k) = z_{k+1 mod n}`.
pub fn multiple_shooting(p: &MapParams, mut pts: Vec<Point>) -> Result<Vec<Point>> {
    let n = pts.len();
    for _ in 0..8 {
        let res = symbolic::cyclic_residual(p, &pts);
        if !res.is_finite() {
            return Err(HblError::NewtonFailed { last: pts[0] });
        }
        if res < 1e-15 {
            break;
        }
        let mut jac = DMatrix::<f64>::zeros(2 * n, 2 * n);
        let mut rhs = DVector::<f64>::zeros(2 * n);
        for k in 0..n {
            let j = p.jacobian(&pts[k]);
            let f = p.step(&pts[k]);
            let k1 = (k + 1) % n;
            for r in 0..2 {
                for c in 0..2 {
                    jac[(2 * k + r, 2 * k + c)] += j.m[r][c];
                }
                jac[(2 * k + r, 2 * k1 + r)] -= 1.0;
            }
            rhs[2 * k] = -(f.x - pts[k1].x);
            rhs[2 * k + 1] = -(f.y - pts[k1].y);
        }
        let delta = jac.lu().solve(&rhs).ok_or(HblError::NonHyperbolic)?;
        for k in 0..n {
            pts[k] = Point::new(pts[k].x + delta[2 * k], pts[k].y + delta[2 * k + 1]);
        }
    }
    Ok(pts)
}

/// Smallest divisor `d` of the cycle length with the cycle invariant under
/// a shift by `d` (to 1e-6).
pub fn prime_period(pts: &[Point]) -> usize {
    let n = pts.len();
    for d in 1..n {
        if n % d == 0 && (0..n).all(|k| dist(&pts[k], &pts[(k + d) % n]) < 1e-6) {
            return d;
        }
    }
    n
}

/// Rotates the cycle to start at its lexicographically smallest point.
pub fn canonical_rotation(mut pts: Vec<Point>) -> Vec<Point> {
    let i0 = (0..pts.len())
        .min_by(|&i, &j| {
            pts[i]
                .x
                .total_cmp(&pts[j].x)
                .then(pts[i].y.total_cmp(&pts[j].y))
        })
        .unwrap_or(0);
    pts.rotate_left(i0);
    pts
}

pub fn hausdorff(a: &[Point], b: &[Point]) -> f64 {
    let d = |u: &[Point], v: &[Point]| {
        u.iter()
            .map(|p| v.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    d(a, b).max(d(b, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedGrid {
    pub nx: usize,
    pub ny: usize,
    pub rect: Rect,
}

impl Default for SeedGrid {
    fn default() -> Self {
        Self { nx: 200, ny: 40, rect: Rect::working() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enumeration {
    pub orbits: Vec<PeriodicOrbit>,
    pub failed_seeds: usize,
    pub seeds_tried: usize,
}

impl Enumeration {
    pub fn count_by_period(&self, max_period: usize) -> Vec<usize> {
        let mut c = vec![0; max_period];
        for o in &self.orbits {
            if o.period >= 1 && o.period <= max_period {
                c[o.period - 1] += 1;
            }
        }
        c
    }
}

/// Grid-seeded and symbol-seeded Newton search for all periods up to `max_period`.
pub fn enumerate_periodic(p: &MapParams, max_period: usize, grid: &SeedGrid) -> Result<Enumeration> {
    if max_period == 0 || max_period > 20 {
        return Err(HblError::Precondition(format!("max_period must be in 1..=20, got {max_period}")));
    }
    let mut jobs: Vec<(usize, Point)> = Vec::new();
    for n in 1..=max_period {
        if p.is_standard() {
            for w in symbolic::lyndon_words(n) {
                let (pts, res) = symbolic::solve_cyclic(p, &w, 400);
                if res < 1e-6 {
                    jobs.push((n, pts[0]));
                }
            }
        }
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                let x = grid.rect.x0 + (grid.rect.x1 - grid.rect.x0) * (i as f64 + 0.5) / grid.nx as f64;
                let y = grid.rect.y0 + (grid.rect.y1 - grid.rect.y0) * (j as f64 + 0.5) / grid.ny as f64;
                jobs.push((n, Point::new(x, y)));
            }
        }
    }
    let results: Vec<Option<PeriodicOrbit>> = jobs
        .par_iter()
        .map(|(n, z)| newton_periodic(p, *z, *n).ok())
        .collect();
    let failed = results.iter().filter(|r| r.is_none()).count();
    let mut found: Vec<PeriodicOrbit> = results.into_iter().flatten().collect();
    found.sort_by(|u, v| {
        u.period
            .cmp(&v.period)
            .then(u.points[0].x.total_cmp(&v.points[0].x))
            .then(u.points[0].y.total_cmp(&v.points[0].y))
    });
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    for o in found {
        let dup = orbits
            .iter()
            .rev()
            .take_while(|u| u.period == o.period)
            .any(|u| hausdorff(&u.points, &o.points) < 1e-6);
        if !dup {
            orbits.push(o);
        }
    }
    Ok(Enumeration { orbits, failed_seeds: failed, seeds_tried: jobs.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitExponents {
    pub chi_s: f64,
    pub chi_u: f64,
}

pub fn orbit_exponents(o: &PeriodicOrbit) -> Result<OrbitExponents> {
    if !o.is_saddle() {
        return Err(HblError::ExponentsNotHyperbolic);
    }
    let n = o.period as f64;
    Ok(OrbitExponents {
        chi_u: o.multipliers[0].modulus().ln() / n,
        chi_s: o.multipliers[1].modulus().ln() / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Orientation;

    #[test]
    fn fixed_points_match_quadratic() {
        let p = MapParams::new(2.0, 1e-4, Orientation::Plus).unwrap();
        let fs = fixed_points(&p).unwrap();
        let (a, b) = (2.0_f64, 1e-4_f64);
        let xp = (-(1.0 + b) + ((1.0 + b) * (1.0 + b) + 4.0 * a).sqrt()) / (2.0 * a);
        assert!((fs.p.points[0].x - xp).abs() < 1e-12);
        assert!((fs.p.points[0].y - b.sqrt() * xp).abs() < 1e-12);
        assert!(fs.p.points[0].x > 0.0 && fs.q.points[0].x < 0.0);
        let prod = fs.q.multipliers[0].re * fs.q.multipliers[1].re;
        assert!((prod - b).abs() < 1e-10 * b);
        assert!((fs.q.multipliers[0].re - 4.0).abs() < 0.01);
    }

    #[test]
    fn newton_returns_fixed_point_and_reduces_period() {
        let p = MapParams::new(2.0, 1e-4, Orientation::Plus).unwrap();
        let fs = fixed_points(&p).unwrap();
        let seed = fs.p.points[0];
        let o1 = newton_periodic(&p, seed, 1).unwrap();
        assert!(dist(&o1.points[0], &seed) < 1e-12);
        let o3 = newton_periodic(&p, seed, 3).unwrap();
        assert_eq!(o3.period, 1);
        assert!(dist(&o3.points[0], &seed) < 1e-12);
    }

    #[test]
    fn period_two_near_one_dimensional_orbit() {
        let p = MapParams::new(1.95, 1e-3, Orientation::Plus).unwrap();
        // 1D period-2 points of 1 - a x^2: a^2 x^2 - a x + (1 - a) = 0
        let a = 1.95_f64;
        let x1 = (a + (a * a - 4.0 * a * a * (1.0 - a)).sqrt()) / (2.0 * a * a);
        let o = newton_periodic(&p, Point::new(x1, 0.0), 2).unwrap();
        assert_eq!(o.period, 2);
        assert!(o.residual < 1e-10);
        let xs: Vec<f64> = o.points.iter().map(|z| z.x).collect();
        let x2 = (a - (a * a - 4.0 * a * a * (1.0 - a)).sqrt()) / (2.0 * a * a);
        assert!(xs.iter().any(|x| (x - x1).abs() < 0.01) && xs.iter().any(|x| (x - x2).abs() < 0.01));
    }

    #[test]
    fn classification_thresholds() {
        let m = |a: f64, b: f64| [Multiplier { re: a, im: 0.0 }, Multiplier { re: b, im: 0.0 }];
        assert_eq!(classify(&m(4.0, 0.01)), Classification::Saddle);
        assert_eq!(classify(&m(0.9, 0.01)), Classification::Attracting);
        assert_eq!(classify(&m(3.0, 2.0)), Classification::Repelling);
        assert_eq!(classify(&m(1.0, 0.01)), Classification::Elliptic);
    }

    #[test]
    fn exponents_sum_to_log_b() {
        let p = MapParams::new(2.0, 1e-4, Orientation::Plus).unwrap();
        let fs = fixed_points(&p).unwrap();
        let e = orbit_exponents(&fs.q).unwrap();
        assert!((e.chi_s + e.chi_u - p.b.ln()).abs() < 1e-8);
        assert!((e.chi_u - 4.0_f64.ln()).abs() < 1e-3);
    }
}
