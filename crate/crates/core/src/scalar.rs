use std::fmt::Debug;
use std::ops::Neg;

use num_traits::Num;

/// Field-like scalar accepted by the generic map and geometry types.
pub trait Scalar: Num + Neg<Output = Self> + Clone + PartialOrd + Debug + Send + Sync {}

impl<T> Scalar for T where T: Num + Neg<Output = T> + Clone + PartialOrd + Debug + Send + Sync {}
