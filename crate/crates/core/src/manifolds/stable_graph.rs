//! The two stable arcs bounding the region near the strip `|y| <= sqrt(b)`,
//! represented as graphs `x = h(y)`.

use crate::error::{HblError, Result};
use crate::periodic::fixed_point_locations;
use crate::{MapParams, Point};

/// Side of the local stable manifold of `Q`: `+1` if the orbit leaves
/// towards larger `x`, `-1` otherwise.
fn escape_side(p: &MapParams, q: &Point, mut z: Point) -> f64 {
    for k in 0..200 {
        let d = (z.x - q.x).hypot(z.y - q.y);
        if k >= 1 && d > 0.1 || !d.is_finite() {
            break;
        }
        z = p.step(&z);
    }
    if z.x - q.x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Cubic Hermite interpolant through uniform samples.
#[derive(Debug, Clone)]
struct Graph {
    y0: f64,
    dy: f64,
    xs: Vec<f64>,
    ds: Vec<f64>,
}

impl Graph {
    fn new(y0: f64, y1: f64, xs: Vec<f64>) -> Self {
        let n = xs.len();
        let dy = (y1 - y0) / (n - 1) as f64;
        let ds = (0..n)
            .map(|i| {
                let (l, r) = (i.saturating_sub(1), (i + 1).min(n - 1));
                (xs[r] - xs[l]) / ((r - l) as f64 * dy)
            })
            .collect();
        Self { y0, dy, xs, ds }
    }

    fn eval(&self, y: f64) -> f64 {
        let n = self.xs.len();
        let s = ((y - self.y0) / self.dy).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.xs[i] + h10 * self.dy * self.ds[i] + h01 * self.xs[i + 1] + h11 * self.dy * self.ds[i + 1]
    }

    fn y_range(&self) -> (f64, f64) {
        (self.y0, self.y0 + self.dy * (self.xs.len() - 1) as f64)
    }
}

/// `A0-` (the component of `W^s(Q)` through `Q` in the strip) and `A0+`
/// (its preimage component near `x = 1`), both as graphs over `|y| <= 2 sqrt(b)`.
#[derive(Debug, Clone)]
pub struct StableGraphs {
    pub q: Point,
    minus: Graph,
    plus: Graph,
    a: f64,
    sqrt_b: f64,
    sigma: f64,
}

pub const GRAPH_SAMPLES: usize = 65;

impl StableGraphs {
    pub fn new(p: &MapParams) -> Result<Self> {
        if !p.is_standard() {
            return Err(HblError::InverseUnavailable);
        }
        let (_, q) = fixed_point_locations(p)?;
        let sb = p.sqrt_b();
        let (y0, y1) = (-2.0 * sb, 2.0 * sb);
        let n = GRAPH_SAMPLES;
        let ys: Vec<f64> = (0..n).map(|i| y0 + (y1 - y0) * i as f64 / (n - 1) as f64).collect();
        let mut xm = Vec::with_capacity(n);
        for &y in &ys {
            let (mut lo, mut hi) = (q.x - 0.05, q.x + 0.05);
            if escape_side(p, &q, Point::new(lo, y)) > 0.0 || escape_side(p, &q, Point::new(hi, y)) < 0.0 {
                return Err(HblError::MissingArc("A0-".into()));
            }
            while hi - lo > 4.0 * f64::EPSILON {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if escape_side(p, &q, Point::new(mid, y)) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            xm.push(0.5 * (lo + hi));
        }
        let minus = Graph::new(y0, y1, xm);
        let sigma = p.sigma();
        let mut xp = Vec::with_capacity(n);
        for &y in &ys {
            let f = |w: f64| 1.0 - p.a * w * w - sb * y - minus.eval(sigma * sb * w);
            let (mut lo, mut hi) = (0.6, 1.4);
            if f(lo) <= 0.0 || f(hi) >= 0.0 {
                return Err(HblError::MissingArc("A0+".into()));
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            xp.push(0.5 * (lo + hi));
        }
        let plus = Graph::new(y0, y1, xp);
        Ok(Self { q, minus, plus, a: p.a, sqrt_b: sb, sigma })
    }

    pub fn h_minus(&self, y: f64) -> f64 {
        self.minus.eval(y)
    }

    pub fn h_plus(&self, y: f64) -> f64 {
        self.plus.eval(y)
    }

    pub fn y_range(&self) -> (f64, f64) {
        self.minus.y_range()
    }

    /// The preimage of `A0+` near `x = 0`, a downward parabola `y = S(x)`.
    pub fn fold_arc(&self, x: f64) -> f64 {
        (1.0 - self.a * x * x - self.h_plus(self.sigma * self.sqrt_b * x)) / self.sqrt_b
    }

    pub fn fold_arc_slope(&self, x: f64) -> f64 {
        let h = 1e-6;
        (self.fold_arc(x + h) - self.fold_arc(x - h)) / (2.0 * h)
    }

    /// Polyline of `A0-` (or `A0+`) between `y_lo` and `y_hi`.
    pub fn arc(&self, plus: bool, y_lo: f64, y_hi: f64, n: usize) -> Vec<Point> {
        (0..n)
            .map(|i| {
                let y = y_lo + (y_hi - y_lo) * i as f64 / (n - 1).max(1) as f64;
                Point::new(if plus { self.h_plus(y) } else { self.h_minus(y) }, y)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Orientation;

    #[test]
    fn graphs_are_invariant_pieces() {
        let p = MapParams::new(2.05, 1e-3, Orientation::Plus).unwrap();
        let g = StableGraphs::new(&p).unwrap();
        assert!((g.h_minus(g.q.y) - g.q.x).abs() < 1e-12);
        // f maps A0+ into A0-
        for k in 0..11 {
            let y = -1.5 * p.sqrt_b() + 0.3 * p.sqrt_b() * k as f64;
            let z = p.step(&Point::new(g.h_plus(y), y));
            assert!((z.x - g.h_minus(z.y)).abs() < 1e-9);
        }
        // f maps the fold arc into A0+
        for x in [-0.2, 0.0, 0.1] {
            let z = p.step(&Point::new(x, g.fold_arc(x)));
            assert!((z.x - g.h_plus(z.y)).abs() < 1e-9);
        }
    }
}
