//! Scalar abstraction shared by the numerical layers.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point type usable by the delay-function and analysis layers.
///
/// Implemented for `f32` and `f64`. The simulation layers (signals, channels,
/// circuits) are fixed to `f64` seconds; see [`crate::Time`].
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal, panicking only for non-representable values,
    /// which cannot happen for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Absolute tolerance floor for bracketed root finding at magnitude `scale`.
    #[inline]
    fn tol_floor(scale: Self) -> Self {
        Self::epsilon() * Self::lit(4.0) * (Self::one() + scale.abs())
    }
}

impl Real for f32 {}
impl Real for f64 {}
