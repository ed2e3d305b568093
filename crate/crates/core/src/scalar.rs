use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type the numerical kernels are written against.
///
/// Implemented for `f32` and `f64`. Random draws are generated in `f64`
/// and narrowed, so the stream of random numbers is the same for both.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + Sum + 'static
{
    /// Converts an `f64` constant into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Smallest positive value used in place of an exact zero before logging.
    fn prob_floor() -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn prob_floor() -> Self {
        1e-300
    }
}

impl Scalar for f32 {
    #[inline]
    fn prob_floor() -> Self {
        f32::MIN_POSITIVE
    }
}
