//! Scalar abstraction shared by the tensor engine and everything built on it.
//!
//! Training runs use `f32`; gradient checks and analysis code may instantiate the
//! same engine at `f64`. Reductions always widen to `f64` regardless of `T`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Real scalar usable as tensor storage.
pub trait Scalar:
    Float + FromPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Widen to the 64-bit accumulator type.
    fn widen(self) -> f64;
    /// Round an accumulator value back to storage precision.
    fn narrow(v: f64) -> Self;
    /// Short type name recorded in diagnostics.
    const NAME: &'static str;
}

impl Scalar for f32 {
    #[inline(always)]
    fn widen(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn narrow(v: f64) -> Self {
        v as f32
    }
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    #[inline(always)]
    fn widen(self) -> f64 {
        self
    }
    #[inline(always)]
    fn narrow(v: f64) -> Self {
        v
    }
    const NAME: &'static str = "f64";
}
