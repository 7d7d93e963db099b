//! Scalar abstraction for the numeric pipeline.
//!
//! Everything downstream of byte handling (entropy values, wavelet
//! coefficients, centroids, tree thresholds, scores) is generic over [`Real`]
//! so the same code runs in `f32` or `f64`. The crate root exports `f64`
//! aliases for the shipped configuration.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Convert a count or length; counts in this crate stay far below the
    /// mantissa limit of either float width.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as scalar")
    }

    /// Convert a literal constant.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable as scalar")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
}
