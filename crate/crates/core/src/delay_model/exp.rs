use serde::{Deserialize, Serialize};

use super::DelayError;
use crate::scalar::Real;

/// Parameters of an exp-channel: a first-order RC stage with pure delay and
/// a normalized switching threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpChannelParams<T = f64> {
    /// RC time constant.
    pub tau: T,
    /// Pure delay component.
    pub t_p: T,
    /// Threshold as a fraction of the supply, in (0, 1).
    pub vth: T,
}

impl<T: Real> ExpChannelParams<T> {
    pub fn new(tau: T, t_p: T, vth: T) -> Result<Self, DelayError> {
        let p = Self { tau, t_p, vth };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DelayError> {
        let ok = self.tau > T::zero()
            && self.tau.is_finite()
            && self.t_p > T::zero()
            && self.t_p.is_finite()
            && self.vth > T::zero()
            && self.vth < T::one();
        if ok {
            Ok(())
        } else {
            Err(DelayError::InvalidParams(format!(
                "exp-channel needs tau > 0, t_p > 0, 0 < vth < 1 (got tau={}, t_p={}, vth={})",
                self.tau, self.t_p, self.vth
            )))
        }
    }

    /// δ∞↑ = T_p − τ ln(1 − V̄th).
    pub fn inf_up(&self) -> T {
        self.t_p - self.tau * (T::one() - self.vth).ln()
    }

    /// δ∞↓ = T_p − τ ln(V̄th).
    pub fn inf_down(&self) -> T {
        self.t_p - self.tau * self.vth.ln()
    }

    pub fn up(&self, t: T) -> T {
        Self::branch(self.tau, t + self.inf_down(), self.inf_up())
    }

    pub fn down(&self, t: T) -> T {
        Self::branch(self.tau, t + self.inf_up(), self.inf_down())
    }

    pub fn deriv_up(&self, t: T) -> T {
        Self::branch_deriv(self.tau, t + self.inf_down())
    }

    pub fn deriv_down(&self, t: T) -> T {
        Self::branch_deriv(self.tau, t + self.inf_up())
    }

    /// τ ln(1 − e^{−x/τ}) + asymptote, or −∞ outside the domain x > 0.
    #[inline]
    fn branch(tau: T, x: T, asymptote: T) -> T {
        if !(x > T::zero()) {
            return T::neg_infinity();
        }
        tau * (-(-x / tau).exp()).ln_1p() + asymptote
    }

    #[inline]
    fn branch_deriv(tau: T, x: T) -> T {
        if !(x > T::zero()) {
            return T::infinity();
        }
        let q = -x / tau;
        q.exp() / -q.exp_m1()
    }

    pub fn map_scalar<U: Real>(&self) -> ExpChannelParams<U> {
        ExpChannelParams {
            tau: U::lit(self.tau.to_f64_lossy()),
            t_p: U::lit(self.t_p.to_f64_lossy()),
            vth: U::lit(self.vth.to_f64_lossy()),
        }
    }
}
