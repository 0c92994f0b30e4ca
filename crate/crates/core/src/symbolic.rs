//! Two-symbol coding of the horseshoe: necklace counts, Lyndon words and the
//! inverse-branch solve that turns a sign word into an orbit.

use crate::{MapParams, Point};

fn mobius(mut n: usize) -> i64 {
    let mut mu = 1;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return 0;
            }
            mu = -mu;
        }
        p += 1;
    }
    if n > 1 {
        mu = -mu;
    }
    mu
}

/// Number of prime period-`n` orbits of the full 2-shift.
pub fn necklace_count(n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let s: i64 = (1..=n)
        .filter(|d| n % d == 0)
        .map(|d| mobius(n / d) * (1i64 << d))
        .sum();
    (s / n as i64) as usize
}

/// Binary Lyndon words of length exactly `n` (Duval's generator).
pub fn lyndon_words(n: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut w: Vec<u8> = vec![0];
    loop {
        if w.len() == n {
            out.push(w.clone());
        }
        let m = w.len();
        while w.len() < n {
            let c = w[w.len() - m];
            w.push(c);
        }
        while let Some(&last) = w.last() {
            if last == 1 {
                w.pop();
            } else {
                break;
            }
        }
        match w.last_mut() {
            Some(c) => *c = 1,
            None => break,
        }
    }
    out
}

fn sign(s: u8) -> f64 {
    if s == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Solves the period-`n` orbit with itinerary `word` (symbol 0 is `x < 0`)
/// through the backward branches `x_k = s_k sqrt((1 - x_{k+1} - sigma b x_{k-1}) / a)`.
/// Returns the points `(x_k, sigma sqrt(b) x_{k-1})` and the largest one-step residual.
pub fn solve_cyclic(p: &MapParams, word: &[u8], sweeps: usize) -> (Vec<Point>, f64) {
    let n = word.len();
    let mut x: Vec<f64> = word.iter().map(|&s| 0.7 * sign(s)).collect();
    let sb = p.sigma() * p.b;
    for _ in 0..sweeps {
        let mut change: f64 = 0.0;
        for k in (0..n).rev() {
            let next = x[(k + 1) % n];
            let prev = x[(k + n - 1) % n];
            let r = ((1.0 - next - sb * prev) / p.a).max(0.0);
            let v = sign(word[k]) * r.sqrt();
            change = change.max((v - x[k]).abs());
            x[k] = v;
        }
        if change < 1e-16 {
            break;
        }
    }
    let pts: Vec<Point> = (0..n)
        .map(|k| Point::new(x[k], p.sigma() * p.sqrt_b() * x[(k + n - 1) % n]))
        .collect();
    let res = cyclic_residual(p, &pts);
    (pts, res)
}

/// Largest `|f(z_k) - z_{k+1 mod n}|`.
pub fn cyclic_residual(p: &MapParams, pts: &[Point]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|k| {
            let f = p.step(&pts[k]);
            let q = pts[(k + 1) % n];
            (f.x - q.x).abs().max((f.y - q.y).abs())
        })
        .fold(0.0, f64::max)
}

/// Largest `|f(z_k) - z_{k+1}|` along an open segment.
pub fn open_residual(p: &MapParams, pts: &[Point]) -> f64 {
    pts.windows(2)
        .map(|w| {
            let f = p.step(&w[0]);
            (f.x - w[1].x).abs().max((f.y - w[1].y).abs())
        })
        .fold(0.0, f64::max)
}

/// Orbit segment with itinerary `word` (symbol 0 is `x < 0`), solved as a
/// boundary-value problem. `pad` extra symbols on each side absorb the
/// unknown boundary values; they are dropped from the output.
pub fn solve_open(p: &MapParams, word: &[u8], pad_before: &[u8], pad_after: &[u8], sweeps: usize) -> (Vec<Point>, f64) {
    let full: Vec<u8> = pad_before.iter().chain(word).chain(pad_after).copied().collect();
    let n = full.len();
    let mut x: Vec<f64> = full.iter().map(|&s| 0.7 * sign(s)).collect();
    let sb = p.sigma() * p.b;
    for _ in 0..sweeps {
        let mut change: f64 = 0.0;
        for k in (0..n).rev() {
            let next = if k + 1 < n { x[k + 1] } else { 0.0 };
            let prev = if k > 0 { x[k - 1] } else { 0.0 };
            let r = ((1.0 - next - sb * prev) / p.a).max(0.0);
            let v = sign(full[k]) * r.sqrt();
            change = change.max((v - x[k]).abs());
            x[k] = v;
        }
        if change < 1e-16 {
            break;
        }
    }
    let lo = pad_before.len().max(1);
    let hi = pad_before.len() + word.len();
    let pts: Vec<Point> = (lo.min(hi)..hi)
        .map(|k| Point::new(x[k], p.sigma() * p.sqrt_b() * x[k - 1]))
        .collect();
    let res = open_residual(p, &pts);
    (pts, res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Orientation;

    #[test]
    fn necklace_numbers() {
        let want = [2, 1, 2, 3, 6, 9, 18, 30, 56, 99, 186, 335];
        for (i, w) in want.iter().enumerate() {
            assert_eq!(necklace_count(i + 1), *w);
            assert_eq!(lyndon_words(i + 1).len(), *w);
        }
    }

    #[test]
    fn fixed_point_words() {
        let p = MapParams::new(2.2, 1e-3, Orientation::Plus).unwrap();
        let (pw, qw) = crate::periodic::fixed_point_locations(&p).unwrap();
        let (q, r) = solve_cyclic(&p, &[0], 200);
        assert!(r < 1e-14 && (q[0].x - qw.x).abs() < 1e-14);
        let (pp, r) = solve_cyclic(&p, &[1], 200);
        assert!(r < 1e-14 && (pp[0].x - pw.x).abs() < 1e-14);
    }

    #[test]
    fn open_segment_is_an_orbit() {
        let p = MapParams::new(2.2, 1e-3, Orientation::Minus).unwrap();
        let word: Vec<u8> = (0..40).map(|k| ((k * 7 + 3) % 5 < 2) as u8).collect();
        let pad: Vec<u8> = (0..60).map(|k| (k % 3 == 0) as u8).collect();
        let (pts, r) = solve_open(&p, &word, &pad, &pad, 500);
        assert_eq!(pts.len(), 40);
        assert!(r < 1e-12, "{r}");
    }
}
