//! The map family `(x, y) -> (1 - a x^2, 0) + b * Phi(a, b, x, y)` and its
//! standard instance `(1 - a x^2 - sqrt(b) y, sigma * sqrt(b) x)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{HblError, Result};
use crate::geometry::{Jacobian2, Point2, Rect, TangentVec2};
use crate::scalar::Scalar;
use crate::{Jacobian2x2, Point, TangentVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "+1")]
    Plus,
    #[serde(rename = "-1")]
    Minus,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Plus => 1.0,
            Orientation::Minus => -1.0,
        }
    }

    pub fn from_sign(s: i32) -> Result<Self> {
        match s {
            1 => Ok(Orientation::Plus),
            -1 => Ok(Orientation::Minus),
            _ => Err(HblError::InvalidInput(format!("orientation must be +1 or -1, got {s}"))),
        }
    }
}

/// Standard form over an arbitrary scalar. `sqrt_b` is stored directly so
/// that exact scalars never need a square root.
#[derive(Debug, Clone, PartialEq)]
pub struct HenonMap<T> {
    pub a: T,
    pub sqrt_b: T,
    pub orientation: Orientation,
}

impl<T: Scalar> HenonMap<T> {
    pub fn new(a: T, sqrt_b: T, orientation: Orientation) -> Self {
        Self { a, sqrt_b, orientation }
    }

    fn sigma(&self) -> T {
        match self.orientation {
            Orientation::Plus => T::one(),
            Orientation::Minus => -T::one(),
        }
    }

    pub fn b(&self) -> T {
        self.sqrt_b.clone() * self.sqrt_b.clone()
    }

    pub fn apply(&self, z: &Point2<T>) -> Point2<T> {
        let (x, y) = (z.x.clone(), z.y.clone());
        Point2::new(
            T::one() - self.a.clone() * x.clone() * x.clone() - self.sqrt_b.clone() * y,
            self.sigma() * self.sqrt_b.clone() * x,
        )
    }

    pub fn apply_inverse(&self, z: &Point2<T>) -> Result<Point2<T>> {
        if self.sqrt_b.is_zero() {
            return Err(HblError::NonInvertible);
        }
        let x = z.y.clone() / (self.sigma() * self.sqrt_b.clone());
        let y = (T::one() - self.a.clone() * x.clone() * x.clone() - z.x.clone()) / self.sqrt_b.clone();
        Ok(Point2::new(x, y))
    }

    pub fn jacobian(&self, z: &Point2<T>) -> Jacobian2<T> {
        let two = T::one() + T::one();
        Jacobian2::new([
            [-(two * self.a.clone() * z.x.clone()), -self.sqrt_b.clone()],
            [self.sigma() * self.sqrt_b.clone(), T::zero()],
        ])
    }
}

/// Bounded perturbation `Phi` for the general family. Implementors supply
/// the partial derivatives and the declared bounds.
pub trait Perturbation: Send + Sync {
    fn eval(&self, a: f64, b: f64, x: f64, y: f64) -> (f64, f64);
    /// Rows `(dPhi1/dx, dPhi1/dy), (dPhi2/dx, dPhi2/dy)`.
    fn jacobian(&self, a: f64, b: f64, x: f64, y: f64) -> [[f64; 2]; 2];
    fn sup_bound(&self) -> f64;
    fn c1_bound(&self) -> f64;
}

#[derive(Clone)]
pub enum Variant {
    StandardHenon,
    CustomPhi(Arc<dyn Perturbation>),
}

impl fmt::Debug for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::StandardHenon => write!(f, "StandardHenon"),
            Variant::CustomPhi(phi) => {
                write!(f, "CustomPhi(sup={}, c1={})", phi.sup_bound(), phi.c1_bound())
            }
        }
    }
}

/// Binary64 parameters with derived constants.
#[derive(Debug, Clone)]
pub struct MapParams {
    pub a: f64,
    pub b: f64,
    pub orientation: Orientation,
    pub variant: Variant,
    sqrt_b: f64,
    sigma: f64,
}

impl MapParams {
    pub fn new(a: f64, b: f64, orientation: Orientation) -> Result<Self> {
        Self::with_variant(a, b, orientation, Variant::StandardHenon)
    }

    pub fn with_variant(a: f64, b: f64, orientation: Orientation, variant: Variant) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || b <= 0.0 {
            return Err(HblError::InvalidInput(format!("need finite a and b > 0 (a={a}, b={b})")));
        }
        Ok(Self { a, b, orientation, variant, sqrt_b: b.sqrt(), sigma: orientation.sign() })
    }

    /// Same family member at another `a`.
    pub fn at_a(&self, a: f64) -> Self {
        Self { a, ..self.clone() }
    }

    pub fn sqrt_b(&self) -> f64 {
        self.sqrt_b
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_standard(&self) -> bool {
        matches!(self.variant, Variant::StandardHenon)
    }

    pub fn henon(&self) -> HenonMap<f64> {
        HenonMap::new(self.a, self.sqrt_b, self.orientation)
    }

    /// Unchecked forward step.
    #[inline]
    pub fn step(&self, z: &Point) -> Point {
        match &self.variant {
            Variant::StandardHenon => Point::new(
                1.0 - self.a * z.x * z.x - self.sqrt_b * z.y,
                self.sigma * self.sqrt_b * z.x,
            ),
            Variant::CustomPhi(phi) => {
                let (p1, p2) = phi.eval(self.a, self.b, z.x, z.y);
                Point::new(1.0 - self.a * z.x * z.x + self.b * p1, self.b * p2)
            }
        }
    }

    /// Unchecked inverse step (standard form only; callers check the variant).
    #[inline]
    pub fn step_inverse(&self, z: &Point) -> Point {
        let x = z.y / (self.sigma * self.sqrt_b);
        Point::new(x, (1.0 - self.a * x * x - z.x) / self.sqrt_b)
    }

    pub fn apply(&self, z: &Point) -> Result<Point> {
        if !(z.x.is_finite() && z.y.is_finite()) {
            return Err(HblError::NonFinite);
        }
        Ok(self.step(z))
    }

    pub fn apply_inverse(&self, z: &Point) -> Result<Point> {
        if !self.is_standard() {
            return Err(HblError::InverseUnavailable);
        }
        if !(z.x.is_finite() && z.y.is_finite()) {
            return Err(HblError::NonFinite);
        }
        Ok(self.step_inverse(z))
    }

    #[inline]
    pub fn jacobian(&self, z: &Point) -> Jacobian2x2 {
        match &self.variant {
            Variant::StandardHenon => Jacobian2::new([
                [-2.0 * self.a * z.x, -self.sqrt_b],
                [self.sigma * self.sqrt_b, 0.0],
            ]),
            Variant::CustomPhi(phi) => {
                let d = phi.jacobian(self.a, self.b, z.x, z.y);
                Jacobian2::new([
                    [-2.0 * self.a * z.x + self.b * d[0][0], self.b * d[0][1]],
                    [self.b * d[1][0], self.b * d[1][1]],
                ])
            }
        }
    }

    /// Sampled sup of `|df_i/dx_j|` over `rect`, used to check a declared bound.
    pub fn sampled_derivative_sup(&self, rect: &Rect, n: usize) -> f64 {
        let mut sup: f64 = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let z = Point::new(
                    rect.x0 + (rect.x1 - rect.x0) * i as f64 / n as f64,
                    rect.y0 + (rect.y1 - rect.y0) * j as f64 / n as f64,
                );
                let m = self.jacobian(&z).m;
                sup = sup.max(m[0][0].abs()).max(m[0][1].abs()).max(m[1][0].abs()).max(m[1][1].abs());
            }
        }
        sup
    }

    /// Checks a caller-declared derivative bound `c0` on `rect` by sampling.
    pub fn check_declared_bound(&self, c0: f64, rect: &Rect) -> Result<()> {
        let s = self.sampled_derivative_sup(rect, 64);
        if s <= c0 {
            Ok(())
        } else {
            Err(HblError::InvalidInput(format!("declared C0={c0} below sampled sup {s}")))
        }
    }

    /// Normal-form coordinates `(x, sqrt(b) y)`, in which the map reads
    /// `(1 - a x^2 - u, sigma b x)`.
    pub fn to_nf(&self, z: &Point) -> Point {
        Point::new(z.x, self.sqrt_b * z.y)
    }

    pub fn from_nf(&self, u: &Point) -> Point {
        Point::new(u.x, u.y / self.sqrt_b)
    }

    /// Tangent vector components in normal-form coordinates.
    pub fn vec_to_nf(&self, v: (f64, f64)) -> (f64, f64) {
        (v.0, self.sqrt_b * v.1)
    }

    pub fn vec_from_nf(&self, v: (f64, f64)) -> (f64, f64) {
        (v.0, v.1 / self.sqrt_b)
    }

    /// Slope `|eta/xi|` measured in normal-form coordinates.
    pub fn nf_slope(&self, v: (f64, f64)) -> f64 {
        let (xi, eta) = self.vec_to_nf(v);
        if xi == 0.0 {
            f64::INFINITY
        } else {
            (eta / xi).abs()
        }
    }

    pub fn iterate(&self, z: &Point, n: usize, rect: &Rect) -> OrbitSegment {
        let mut points = Vec::with_capacity(n.min(1 << 20) + 1);
        points.push(*z);
        if !(z.x.is_finite() && z.y.is_finite()) || !rect.contains(z) {
            return OrbitSegment { start: *z, points, escaped_at: Some(0) };
        }
        let mut cur = *z;
        for k in 1..=n {
            cur = self.step(&cur);
            if !(cur.x.is_finite() && cur.y.is_finite()) {
                return OrbitSegment { start: *z, points, escaped_at: Some(k) };
            }
            points.push(cur);
            if !rect.contains(&cur) {
                return OrbitSegment { start: *z, points, escaped_at: Some(k) };
            }
        }
        OrbitSegment { start: *z, points, escaped_at: None }
    }

    /// Number of steps the orbit of `z` stays in `rect`, capped at `n`.
    pub fn escape_time(&self, z: &Point, n: usize, rect: &Rect) -> usize {
        if !rect.contains(z) {
            return 0;
        }
        let mut cur = *z;
        for k in 1..=n {
            cur = self.step(&cur);
            if !rect.contains(&cur) {
                return k;
            }
        }
        n
    }

    /// `w_n(z) = D_{fz} f^{n-1} (1, 0)` together with the renormalized
    /// product matrix `D_{fz} f^{n-1}`.
    pub fn cocycle(&self, z: &Point, n: usize) -> Result<Cocycle> {
        if n == 0 {
            return Err(HblError::InvalidInput("cocycle needs n >= 1".into()));
        }
        if !(z.x.is_finite() && z.y.is_finite()) {
            return Err(HblError::NonFinite);
        }
        let mut cur = self.step(z);
        let mut mat = Jacobian2x2::identity();
        let mut mat_log = 0.0;
        let mut w = (1.0, 0.0);
        let mut w_log = 0.0;
        for k in 1..n {
            if !(cur.x.is_finite() && cur.y.is_finite()) {
                return Err(HblError::Escaped { index: k });
            }
            let j = self.jacobian(&cur);
            mat = j.mul(&mat);
            w = j.apply(w.0, w.1);
            if k % RENORM_EVERY == 0 {
                let nw = w.0.hypot(w.1);
                w = (w.0 / nw, w.1 / nw);
                w_log += nw.ln();
                let nm = mat.norm();
                mat = mat.scale(1.0 / nm);
                mat_log += nm.ln();
            }
            cur = self.step(&cur);
        }
        if !(cur.x.is_finite() && cur.y.is_finite()) {
            return Err(HblError::Escaped { index: n });
        }
        let nw = w.0.hypot(w.1);
        let nm = mat.norm();
        Ok(Cocycle {
            base: cur,
            matrix: mat.scale(1.0 / nm),
            matrix_log_scale: mat_log + nm.ln(),
            w: TangentVec2::new(w.0 / nw, w.1 / nw, cur),
            w_log_norm: w_log + nw.ln(),
        })
    }
}

pub const RENORM_EVERY: usize = 32;

/// Result of [`MapParams::cocycle`]. The true matrix is
/// `exp(matrix_log_scale) * matrix`; the true `w_n` is
/// `exp(w_log_norm) * w` with `w` a unit vector based at `f^n z`.
#[derive(Debug, Clone, Copy)]
pub struct Cocycle {
    pub base: Point,
    pub matrix: Jacobian2x2,
    pub matrix_log_scale: f64,
    pub w: TangentVec,
    pub w_log_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub start: Point,
    pub points: Vec<Point>,
    pub escaped_at: Option<usize>,
}
