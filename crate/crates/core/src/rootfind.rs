//! Bracketed bisection.
//!
//! Every scalar root in the crate (δ_min, the fixed point τ, the critical
//! width, the commit-rule offset, waveform crossings) goes through
//! [`bisect`]. Function values may be `-inf`/`+inf`; only their sign is used.

use thiserror::Error;

use crate::scalar::Real;

/// Default absolute tolerance in seconds.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("no sign change on [{a}, {b}]: f(a) = {fa}, f(b) = {fb}")]
    NoSignChange { a: f64, b: f64, fa: f64, fb: f64 },
    #[error("function returned NaN at {x}")]
    NotANumber { x: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct Bisection<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for Bisection<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(DEFAULT_TOL),
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl<T: Real> Bisection<T> {
    pub fn with_tol(tol: T) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    /// Finds a root of `f` in `[a, b]` given `f(a)` and `f(b)` of opposite
    /// sign (a zero at either end is returned directly).
    pub fn solve<F>(&self, mut f: F, a: T, b: T) -> Result<T, RootError>
    where
        F: FnMut(T) -> T,
    {
        let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
        let mut flo = f(lo);
        let fhi = f(hi);
        if flo.is_nan() {
            return Err(RootError::NotANumber {
                x: lo.to_f64_lossy(),
            });
        }
        if fhi.is_nan() {
            return Err(RootError::NotANumber {
                x: hi.to_f64_lossy(),
            });
        }
        if flo == T::zero() {
            return Ok(lo);
        }
        if fhi == T::zero() {
            return Ok(hi);
        }
        if flo.signum() == fhi.signum() {
            return Err(RootError::NoSignChange {
                a: lo.to_f64_lossy(),
                b: hi.to_f64_lossy(),
                fa: flo.to_f64_lossy(),
                fb: fhi.to_f64_lossy(),
            });
        }
        let two = T::lit(2.0);
        for _ in 0..self.max_iter {
            let tol = self.tol.max(T::tol_floor(lo.abs().max(hi.abs())));
            if hi - lo <= tol {
                break;
            }
            let mid = lo + (hi - lo) / two;
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = f(mid);
            if fm.is_nan() {
                return Err(RootError::NotANumber {
                    x: mid.to_f64_lossy(),
                });
            }
            if fm == T::zero() {
                return Ok(mid);
            }
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        Ok(lo + (hi - lo) / two)
    }
}

/// Bisection with the crate defaults (`1e-12`, 200 iterations).
pub fn bisect<T: Real, F: FnMut(T) -> T>(f: F, a: T, b: T) -> Result<T, RootError> {
    Bisection::default().solve(f, a, b)
}

/// Scans `n` equally spaced interior points of `(a, b)` and returns the first
/// sub-interval `[x_i, x_{i+1}]` on which `f` changes sign (or hits zero).
pub fn first_sign_change<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    n: usize,
) -> Option<(T, T)> {
    let steps = T::from_usize(n.max(1)).unwrap_or_else(T::one);
    let mut x_prev = a;
    let mut f_prev = f(a);
    for i in 1..=n.max(1) {
        let x = a + (b - a) * T::from_usize(i).unwrap_or_else(T::one) / steps;
        let fx = f(x);
        if f_prev == T::zero() || fx == T::zero() || f_prev.signum() != fx.signum() {
            return Some((x_prev, x));
        }
        x_prev = x;
        f_prev = fx;
    }
    None
}
