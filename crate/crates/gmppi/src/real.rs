//! Scalar abstraction over the floating-point type used by the controller.
//!
//! Everything numeric in this crate is generic over [`Real`], so the same
//! kernels run in `f32` or `f64`. Concrete aliases for the common `f64`
//! instantiation live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar usable throughout the controller and simulator.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from a literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    /// Conversion into `f64` for serialization and diagnostics.
    fn to_f64(self) -> f64 {
        num_traits::NumCast::from(self).expect("scalar fits in f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for `T::of` usable in expression position.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::of(x)
}
