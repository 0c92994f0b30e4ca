//! Invariant manifolds of the fixed saddles, their intersections, the
//! first-tangency locator and the trapping region.

pub mod grow;
pub mod intersect;
pub mod region;
pub mod stable_graph;
pub mod tangency;
pub mod theorem_b;

pub use grow::{grow_manifold, GrowthConfig, ManifoldCurve, ManifoldKind, Piece};
