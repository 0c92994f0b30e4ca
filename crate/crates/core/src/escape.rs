//! Escape statistics, samples of the bounded set, uniform expansion on
//! `Omega(eps)` and the absence of attracting cycles.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical::{bound_period_along, jacobian_nf, AnalysisConstants};
use crate::error::{HblError, Result};
use crate::geometry::{dist, Rect};
use crate::lyapunov::estimate_eu_along;
use crate::periodic::{Classification, PeriodicOrbit};
use crate::symbolic::solve_open;
use crate::{MapParams, Point};

pub const BOUNDED_CAVEAT: &str = "bounded means: stays in the working rectangle for the checked horizon, not for all n";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeGrid {
    pub nx: usize,
    pub ny: usize,
    pub rect: Rect,
}

impl EscapeGrid {
    /// Cell centre of `(i, j)`.
    pub fn point(&self, i: usize, j: usize) -> Point {
        let r = &self.rect;
        Point::new(
            r.x0 + (r.x1 - r.x0) * (i as f64 + 0.5) / self.nx as f64,
            r.y0 + (r.y1 - r.y0) * (j as f64 + 0.5) / self.ny as f64,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    pub a: f64,
    pub b: f64,
    pub grid: EscapeGrid,
    pub horizons: Vec<usize>,
    pub fraction_bounded: Vec<f64>,
    pub monotone: bool,
    pub caveat: String,
}

impl EscapeReport {
    pub const CSV_HEADER: &'static str = "N,fraction";

    pub fn csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for (n, f) in self.horizons.iter().zip(&self.fraction_bounded) {
            s.push_str(&format!("{n},{f}\n"));
        }
        s
    }
}

/// Steps `z` stays in `rect`, capped at `cap`.
fn survival(p: &MapParams, z: &Point, cap: usize, rect: &Rect) -> usize {
    if !rect.contains(z) {
        return 0;
    }
    let mut cur = *z;
    for k in 1..=cap {
        cur = p.step(&cur);
        if !rect.contains(&cur) {
            return k - 1;
        }
    }
    cap
}

/// Fraction of grid points whose orbit stays in the working rectangle for
/// each horizon `N` (steps `1..=N`).
pub fn measure_escape(p: &MapParams, grid: &EscapeGrid, horizons: &[usize]) -> EscapeReport {
    let rect = Rect::working();
    let cap = horizons.iter().copied().max().unwrap_or(0);
    let survived: Vec<usize> = (0..grid.nx * grid.ny)
        .into_par_iter()
        .map(|k| survival(p, &grid.point(k % grid.nx, k / grid.nx), cap, &rect))
        .collect();
    let total = survived.len().max(1) as f64;
    let fraction_bounded: Vec<f64> = horizons.iter().map(|&n| survived.iter().filter(|&&s| s >= n).count() as f64 / total).collect();
    let mut order: Vec<usize> = (0..horizons.len()).collect();
    order.sort_by_key(|&i| horizons[i]);
    let monotone = order.windows(2).all(|w| fraction_bounded[w[1]] <= fraction_bounded[w[0]]);
    EscapeReport {
        a: p.a,
        b: p.b,
        grid: *grid,
        horizons: horizons.to_vec(),
        fraction_bounded,
        monotone,
        caveat: BOUNDED_CAVEAT.into(),
    }
}

/// Points of the bounded set, each stored with its orbit segment
/// `f^{-n_check} x, ..., f^{n_check} x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaSample {
    pub epsilon: f64,
    pub n_check: usize,
    pub zeta0: Point,
    pub seed: u64,
    pub attempts: usize,
    pub points: Vec<Point>,
    #[serde(skip)]
    pub segments: Vec<Vec<Point>>,
    pub caveat: String,
}

pub const SEGMENT_RESIDUAL: f64 = 1e-12;
const PAD: usize = 60;

impl OmegaSample {
    pub fn backward(&self, i: usize) -> &[Point] {
        &self.segments[i][..=self.n_check]
    }

    pub fn forward(&self, i: usize) -> &[Point] {
        &self.segments[i][self.n_check..]
    }

    /// Re-checks every stored segment: one-step residual, rectangle and
    /// distance to `zeta0`.
    pub fn verify(&self, p: &MapParams) -> bool {
        self.segments.iter().zip(&self.points).all(|(s, z)| s[self.n_check] == *z && admits(p, s, &self.zeta0, self.epsilon))
    }
}

/// Whether an orbit segment is a genuine orbit inside the working rectangle
/// that keeps distance `>= eps` from `zeta0`.
pub fn admits(p: &MapParams, seg: &[Point], zeta0: &Point, eps: f64) -> bool {
    let rect = Rect::working();
    seg.iter().all(|z| rect.contains(z) && dist(z, zeta0) >= eps) && crate::symbolic::open_residual(p, seg) < SEGMENT_RESIDUAL
}

/// Longest run of symbol 0 (the side of Q) in proposed itineraries. Runs
/// of length m after a 1 put the preceding point within ~2^-m of x = 0,
/// so uncapped uniform words almost never avoid the ball around `zeta0`.
pub const MAX_ZERO_RUN: usize = 3;

fn proposal(rng: &mut impl Rng, len: usize, max_zero_run: usize) -> Vec<u8> {
    let mut run = 0;
    (0..len)
        .map(|_| {
            let s = if run >= max_zero_run { 1 } else { rng.gen_range(0..2u8) };
            run = if s == 0 { run + 1 } else { 0 };
            s
        })
        .collect()
}

/// Orbit segment of `len` points for attempt `index`, solved from a
/// proposed itinerary.
pub fn symbolic_orbit(p: &MapParams, len: usize, seed: u64, index: u64) -> Vec<Point> {
    let mut rng = crate::rng::stream(seed, index);
    let word = proposal(&mut rng, len, MAX_ZERO_RUN);
    let before = proposal(&mut rng, PAD, MAX_ZERO_RUN);
    let after = proposal(&mut rng, PAD, MAX_ZERO_RUN);
    solve_open(p, &word, &before, &after, 500).0
}

/// [`symbolic_orbit`] of length `2 n_check + 1`.
pub fn symbolic_segment(p: &MapParams, n_check: usize, seed: u64, index: u64) -> Vec<Point> {
    symbolic_orbit(p, 2 * n_check + 1, seed, index)
}

/// `count` bounded orbit segments `x, f x, ..., f^horizon x`. With
/// `strip = Some(delta)` each starts at its first visit to `|x| < delta`
/// (segments without one within `horizon` steps are kept from index 0).
/// Returns the segments and the number of attempts.
pub fn bounded_orbits(p: &MapParams, horizon: usize, count: usize, strip: Option<f64>, seed: u64) -> Result<(Vec<Vec<Point>>, usize)> {
    let rect = Rect::working();
    let lead = if strip.is_some() { horizon } else { 0 };
    let max_attempts = ((count.max(1) as f64) / MIN_YIELD) as usize;
    let batch = count.clamp(16, 1024);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        if attempts >= max_attempts {
            return Err(HblError::BoundedSetTooThin { attempts });
        }
        let got: Vec<Option<Vec<Point>>> = (attempts..attempts + batch)
            .into_par_iter()
            .map(|i| {
                let s = symbolic_orbit(p, horizon + 1 + lead, seed, i as u64);
                let ok = s.len() == horizon + 1 + lead
                    && s.iter().all(|z| rect.contains(z))
                    && crate::symbolic::open_residual(p, &s) < SEGMENT_RESIDUAL;
                if !ok {
                    return None;
                }
                let start = strip.and_then(|d| s[..=lead].iter().position(|z| z.x.abs() < d)).unwrap_or(0);
                Some(s[start..=start + horizon].to_vec())
            })
            .collect();
        for s in got {
            if out.len() == count {
                break;
            }
            attempts += 1;
            if let Some(s) = s {
                out.push(s);
            }
        }
    }
    Ok((out, attempts))
}

pub const MIN_YIELD: f64 = 1e-6;

/// Up to `count` points of `Omega(eps)`, taken in attempt order so the
/// result does not depend on the thread count.
pub fn sample_bounded(p: &MapParams, n_check: usize, count: usize, epsilon: f64, zeta0: Point, seed: u64) -> Result<OmegaSample> {
    if !p.is_standard() {
        return Err(HblError::InverseUnavailable);
    }
    let max_attempts = ((count.max(1) as f64) / MIN_YIELD) as usize;
    let batch = count.clamp(64, 4096);
    let mut segments = Vec::new();
    let mut attempts = 0usize;
    while segments.len() < count {
        if attempts >= max_attempts {
            return Err(HblError::BoundedSetTooThin { attempts });
        }
        let got: Vec<Option<Vec<Point>>> = (attempts..attempts + batch)
            .into_par_iter()
            .map(|i| {
                let s = symbolic_segment(p, n_check, seed, i as u64);
                (s.len() == 2 * n_check + 1 && admits(p, &s, &zeta0, epsilon)).then_some(s)
            })
            .collect();
        for s in got {
            if segments.len() == count {
                break;
            }
            attempts += 1;
            if let Some(s) = s {
                segments.push(s);
            }
        }
        if segments.is_empty() && attempts as f64 * MIN_YIELD >= 1.0 {
            return Err(HblError::BoundedSetTooThin { attempts });
        }
    }
    let points = segments.iter().map(|s| s[n_check]).collect();
    Ok(OmegaSample { epsilon, n_check, zeta0, seed, attempts, points, segments, caveat: BOUNDED_CAVEAT.into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFailure {
    pub index: usize,
    pub n: usize,
    pub log_growth: f64,
    pub log_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub lambda_star: f64,
    pub n_star: usize,
    pub n_max: usize,
    pub tested: usize,
    /// Points whose unstable direction did not converge.
    pub skipped: usize,
    pub p_sup_observed: usize,
    pub min_margin: f64,
    pub failures: Vec<ExpansionFailure>,
}

impl HyperbolicityReport {
    pub fn pass(&self) -> bool {
        self.failures.is_empty() && self.lambda_star > 1.0 && self.tested > 0
    }
}

/// `log |D f^n|_{E^u}|` for `n = 0..=n_max` along the stored forward orbit
/// (normal-form norms), plus the pushed-forward directions.
fn growth_along(p: &MapParams, fwd: &[Point], eu: (f64, f64), n_max: usize) -> (Vec<f64>, Vec<(f64, f64)>) {
    let mut v = p.vec_to_nf(eu);
    let l0 = v.0.hypot(v.1);
    v = (v.0 / l0, v.1 / l0);
    let mut g = vec![0.0];
    let mut dirs = vec![p.vec_from_nf(v)];
    for z in &fwd[..n_max] {
        let u = jacobian_nf(p, z).apply(v.0, v.1);
        let l = u.0.hypot(u.1);
        v = (u.0 / l, u.1 / l);
        g.push(g.last().unwrap() + l.ln());
        dirs.push(p.vec_from_nf(v));
    }
    (g, dirs)
}

struct PointGrowth {
    index: usize,
    log: Vec<f64>,
    p_max: Option<usize>,
}

fn growths(p: &MapParams, k: &AnalysisConstants, sample: &OmegaSample, n_max: usize) -> (Vec<PointGrowth>, usize) {
    let n_max = n_max.min(sample.n_check);
    let strip = k.critical_region();
    let rows: Vec<Option<PointGrowth>> = (0..sample.points.len())
        .into_par_iter()
        .map(|i| {
            let eu = estimate_eu_along(p, sample.backward(i), (1.0, 0.0)).ok().filter(|e| e.converged)?;
            let fwd = sample.forward(i);
            let (log, dirs) = growth_along(p, fwd, (eu.direction.xi, eu.direction.eta), n_max);
            let mut p_max = None;
            for n in 0..n_max {
                if strip.in_strip(&fwd[n]) {
                    let mut it = fwd[n..].iter().copied();
                    if let Ok(q) = bound_period_along(p, k, &mut it, dirs[n], n_max) {
                        p_max = Some(p_max.unwrap_or(0).max(q));
                    }
                }
            }
            Some(PointGrowth { index: i, log, p_max })
        })
        .collect();
    let skipped = rows.iter().filter(|r| r.is_none()).count();
    (rows.into_iter().flatten().collect(), skipped)
}

fn failures_for(rows: &[PointGrowth], lambda: f64, n_star: usize, n_max: usize) -> (Vec<ExpansionFailure>, f64) {
    let mut out = Vec::new();
    let mut margin = f64::INFINITY;
    for r in rows {
        for n in n_star.max(1)..=n_max.min(r.log.len() - 1) {
            let bound = n as f64 * lambda.ln();
            margin = margin.min(r.log[n] - bound);
            if r.log[n] < bound {
                out.push(ExpansionFailure { index: r.index, n, log_growth: r.log[n], log_bound: bound });
            }
        }
    }
    (out, margin)
}

/// Fits `lambda*` as the sample-wide worst rate over `n in [n_max/2, n_max]`
/// and `N*` as the smallest start index for which that rate still holds.
pub fn verify_uniform_expansion(p: &MapParams, k: &AnalysisConstants, sample: &OmegaSample, n_max: usize) -> Result<HyperbolicityReport> {
    if sample.points.is_empty() {
        return Err(HblError::Precondition("empty sample".into()));
    }
    let n_max = n_max.min(sample.n_check).max(1);
    let (rows, skipped) = growths(p, k, sample, n_max);
    let rate = |n: usize| rows.iter().map(|r| r.log[n] / n as f64).fold(f64::INFINITY, f64::min);
    let rates: Vec<f64> = (0..=n_max).map(|n| if n == 0 { f64::NEG_INFINITY } else { rate(n) }).collect();
    // lambda(N) = exp(min_{n >= N} rate(n)), nondecreasing in N
    let mut suffix = vec![f64::INFINITY; n_max + 2];
    for n in (1..=n_max).rev() {
        suffix[n] = suffix[n + 1].min(rates[n]);
    }
    let half = n_max.div_ceil(2).max(1);
    let lambda_star = suffix[half].exp();
    let n_star = (1..=half).find(|&n| suffix[n] >= suffix[half]).unwrap_or(half);
    let (failures, min_margin) = failures_for(&rows, lambda_star, n_star, n_max);
    Ok(HyperbolicityReport {
        a: p.a,
        b: p.b,
        epsilon: sample.epsilon,
        seed: sample.seed,
        lambda_star,
        n_star,
        n_max,
        tested: rows.len(),
        skipped,
        p_sup_observed: rows.iter().filter_map(|r| r.p_max).max().unwrap_or(0),
        min_margin: if rows.is_empty() { f64::NAN } else { min_margin },
        failures,
    })
}

/// Re-checks `|D f^n|_{E^u}| >= lambda^n` for `n in [n_star, n_max]`.
pub fn check_expansion_bound(p: &MapParams, k: &AnalysisConstants, sample: &OmegaSample, lambda: f64, n_star: usize, n_max: usize) -> Vec<ExpansionFailure> {
    let (rows, _) = growths(p, k, sample, n_max);
    failures_for(&rows, lambda, n_star, n_max.min(sample.n_check)).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorViolation {
    pub period: usize,
    pub point: Point,
    pub multiplier_moduli: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoAttractorReport {
    pub n_orbits: usize,
    pub violations: Vec<AttractorViolation>,
    pub warning: Option<String>,
}

impl NoAttractorReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn verify_no_attracting_periodic(orbits: &[PeriodicOrbit]) -> NoAttractorReport {
    let violations = orbits
        .iter()
        .filter(|o| o.classification == Classification::Attracting)
        .map(|o| AttractorViolation {
            period: o.period,
            point: o.points[0],
            multiplier_moduli: [o.multipliers[0].modulus(), o.multipliers[1].modulus()],
        })
        .collect();
    NoAttractorReport {
        n_orbits: orbits.len(),
        violations,
        warning: orbits.is_empty().then(|| "no orbits supplied; pass is vacuous".to_string()),
    }
}
