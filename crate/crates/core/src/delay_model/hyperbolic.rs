use serde::{Deserialize, Serialize};

use super::DelayError;
use crate::scalar::Real;

/// Closed-form non-exponential involution pair
/// `δ↓(T) = d − c/(T + a)`, `δ↑(T) = a − c/(T + d)`,
/// with asymptotes δ∞↑ = `a`, δ∞↓ = `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicDelay<T = f64> {
    pub a: T,
    pub c: T,
    pub d: T,
}

impl<T: Real> HyperbolicDelay<T> {
    pub fn new(a: T, c: T, d: T) -> Result<Self, DelayError> {
        if a > T::zero()
            && c > T::zero()
            && d > T::zero()
            && a.is_finite()
            && c.is_finite()
            && d.is_finite()
        {
            Ok(Self { a, c, d })
        } else {
            Err(DelayError::InvalidParams(format!(
                "hyperbolic delay needs a, c, d > 0 (got a={a}, c={c}, d={d})"
            )))
        }
    }

    pub fn up(&self, t: T) -> T {
        let x = t + self.d;
        if !(x > T::zero()) {
            return T::neg_infinity();
        }
        self.a - self.c / x
    }

    pub fn down(&self, t: T) -> T {
        let x = t + self.a;
        if !(x > T::zero()) {
            return T::neg_infinity();
        }
        self.d - self.c / x
    }

    /// Smaller root of m² − (a + d)m + ad − c = 0.
    pub fn delta_min_closed_form(&self) -> T {
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        let diff = self.a - self.d;
        ((self.a + self.d) - (diff * diff + four * self.c).sqrt()) / two
    }
}
