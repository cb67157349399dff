//! Scalar abstractions shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};

/// Floating-point scalar used by rates, measures and the simulators.
///
/// Implemented for `f32` and `f64`. Everything random is drawn in `f64`
/// and converted, so a given seed produces the same event stream for
/// either precision up to rounding of the converted values.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the value is unrepresentable,
    /// which never happens for the finite constants used in this crate.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Field used by the exact stationary solver: `f64` for speed, or
/// `BigRational` when the answer must be exact.
pub trait Field: Clone + Num + Signed + PartialOrd + Debug {}

impl<T: Clone + Num + Signed + PartialOrd + Debug> Field for T {}
