//! Hénon-like maps: iteration, periodic orbits, exponents, invariant
//! manifolds, first-tangency location and the critical-structure audits.

pub mod critical;
pub mod error;
pub mod escape;
pub mod geometry;
pub mod lyapunov;
pub mod manifolds;
pub mod map;
pub mod periodic;
pub mod rng;
pub mod scalar;
pub mod symbolic;

pub use error::{HblError, Result};
pub use map::{MapParams, Orientation, Variant};

pub type Point = geometry::Point2<f64>;
pub type TangentVec = geometry::TangentVec2<f64>;
pub type Jacobian2x2 = geometry::Jacobian2<f64>;
