//! Analysis of the OR feedback loop: constraint (C), the worst-case pulse
//! train, the pulse map, critical widths, HT-buffer dimensioning and the
//! short-pulse-filtration verdict.

mod ht;
mod spf;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelError, EtaBounds};
use crate::circuit::{CircuitError, EngineError};
use crate::delay_model::{DelayError, DelayFunction, Edge};
use crate::rootfind::{first_sign_change, Bisection, RootError};
use crate::scalar::Real;

pub use ht::{dimension_ht_buffer, verify_ht_buffer, HT_MAX_DOUBLINGS};
pub use spf::{spf_check, F4Witness, SpfVerdict};
pub use sweep::{
    run_loop, spf_sweep, write_sweep_csv, LoopRun, LoopSetup, SweepResult, SweepRow,
    SWEEP_CSV_HEADER,
};

/// Points scanned below the bracket when looking for an earlier root of h.
pub const EARLY_ROOT_SCAN: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("constraint (C) violated: margin {margin} (η⁺ + η⁻ = {eta_sum}, budget {budget})")]
    ConstraintCViolated {
        margin: f64,
        eta_sum: f64,
        budget: f64,
    },
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error("no sign change: {0}")]
    NoSignChange(String),
    #[error("h has a root near {at}, below the bracket lower end {lower}")]
    EarlierRoot { at: f64, lower: f64 },
    #[error("invariant violated: {0}")]
    InvariantViolated(String),
    #[error("HT buffer search failed: {0}")]
    SearchFailed(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl From<RootError> for AnalysisError {
    fn from(e: RootError) -> Self {
        AnalysisError::NoSignChange(e.to_string())
    }
}

/// Outcome of checking η⁺ + η⁻ < δ↓(−η⁺) − δ_min.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintC<T = f64> {
    pub holds: bool,
    /// δ↓(−η⁺) − δ_min − (η⁺ + η⁻).
    pub margin: T,
    /// δ↓(−η⁺) − δ_min, the largest admissible η⁺ + η⁻ for this η⁺.
    pub budget: T,
}

pub fn constraint_c<T: Real>(
    df: &DelayFunction<T>,
    bounds: EtaBounds<T>,
) -> Result<ConstraintC<T>, AnalysisError> {
    let x = -bounds.eta_plus;
    let lo = df.domain_start(Edge::Falling);
    if !(x > lo) {
        return Err(DelayError::DomainViolation {
            t: x.to_f64_lossy(),
            edge: Edge::Falling,
            bound: lo.to_f64_lossy(),
        }
        .into());
    }
    let budget = df.down(x) - df.delta_min()?;
    let margin = budget - (bounds.eta_plus + bounds.eta_minus);
    Ok(ConstraintC {
        holds: margin > T::zero(),
        margin,
        budget,
    })
}

/// η⁻ = δ↓(−η⁺) − δ_min − η⁺: the largest early shift compatible with a
/// given late shift.
pub fn eta_minus_for<T: Real>(df: &DelayFunction<T>, eta_plus: T) -> Result<T, AnalysisError> {
    let c = constraint_c(
        df,
        EtaBounds {
            eta_minus: T::zero(),
            eta_plus,
        },
    )?;
    Ok(c.budget - eta_plus)
}

fn require_c<T: Real>(
    df: &DelayFunction<T>,
    bounds: EtaBounds<T>,
) -> Result<ConstraintC<T>, AnalysisError> {
    let c = constraint_c(df, bounds)?;
    if c.holds {
        Ok(c)
    } else {
        Err(AnalysisError::ConstraintCViolated {
            margin: c.margin.to_f64_lossy(),
            eta_sum: (bounds.eta_plus + bounds.eta_minus).to_f64_lossy(),
            budget: c.budget.to_f64_lossy(),
        })
    }
}

/// h(τ) = δ↓(η⁺ − τ) + δ↑(−η⁻ − τ) − τ.
pub fn tau_residual<T: Real>(df: &DelayFunction<T>, bounds: EtaBounds<T>, tau: T) -> T {
    df.down(bounds.eta_plus - tau) + df.up(-bounds.eta_minus - tau) - tau
}

/// Open interval known to contain the period of the worst-case train.
pub fn tau_bracket<T: Real>(
    df: &DelayFunction<T>,
    bounds: EtaBounds<T>,
) -> Result<(T, T), AnalysisError> {
    let lower = bounds.eta_plus + df.delta_min()?;
    let upper = (df.inf_down() - bounds.eta_minus).min(bounds.eta_plus + df.inf_up());
    Ok((lower, upper))
}

/// Smallest positive root of h, the period of the worst-case pulse train.
pub fn solve_tau<T: Real>(df: &DelayFunction<T>, bounds: EtaBounds<T>) -> Result<T, AnalysisError> {
    require_c(df, bounds)?;
    let (lower, upper) = tau_bracket(df, bounds)?;
    let h = |t: T| tau_residual(df, bounds, t);
    let (hl, hu) = (h(lower), h(upper));
    if !(hl > T::zero() && hu < T::zero()) {
        return Err(AnalysisError::NoSignChange(format!(
            "h({lower}) = {hl}, h({upper}) = {hu}; expected a sign change from + to -"
        )));
    }
    if let Some((a, _)) = first_sign_change(
        h,
        lower / T::lit(EARLY_ROOT_SCAN as f64),
        lower,
        EARLY_ROOT_SCAN,
    ) {
        if a < lower {
            return Err(AnalysisError::EarlierRoot {
                at: a.to_f64_lossy(),
                lower: lower.to_f64_lossy(),
            });
        }
    }
    Ok(Bisection::default().solve(h, lower, upper)?)
}

/// Symbols of the worst-case pulse train and the loop thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTrainCharacterization<T = f64> {
    pub eta_minus: T,
    pub eta_plus: T,
    pub delta_min: T,
    pub inf_up: T,
    pub tau_star: T,
    /// Up-time Δ of the worst-case train.
    pub delta_up: T,
    pub period: T,
    pub duty: T,
    pub constraint_margin: T,
    pub tilde_delta0: T,
    /// a = 1 + δ↑′(0).
    pub growth_rate: T,
    pub pass_below: T,
    pub lock_above: T,
}

pub fn characterize<T: Real>(
    df: &DelayFunction<T>,
    bounds: EtaBounds<T>,
) -> Result<PulseTrainCharacterization<T>, AnalysisError> {
    let c = require_c(df, bounds)?;
    let tau = solve_tau(df, bounds)?;
    let (lower, upper) = tau_bracket(df, bounds)?;
    let delta_min = df.delta_min()?;
    let delta_up = df.down(bounds.eta_plus - tau);
    let tilde = tilde_delta0_with(df, bounds, delta_up, delta_min)?;
    let ch = PulseTrainCharacterization {
        eta_minus: bounds.eta_minus,
        eta_plus: bounds.eta_plus,
        delta_min,
        inf_up: df.inf_up(),
        tau_star: tau,
        delta_up,
        period: tau,
        duty: delta_up / tau,
        constraint_margin: c.margin,
        tilde_delta0: tilde,
        growth_rate: T::one() + df.derivative_up(T::zero())?,
        pass_below: df.inf_up() - delta_min - bounds.eta_plus - bounds.eta_minus,
        lock_above: df.inf_up() + bounds.eta_plus,
    };
    let fail = |m: String| Err(AnalysisError::InvariantViolated(m));
    if !(lower < tau && tau < upper) {
        return fail(format!("τ = {tau} outside ({lower}, {upper})"));
    }
    if !(ch.delta_up > T::zero() && ch.delta_up < delta_min) {
        return fail(format!(
            "Δ = {} not in (0, δ_min = {delta_min})",
            ch.delta_up
        ));
    }
    if !(ch.duty < T::one()) {
        return fail(format!("γ = {} not below 1", ch.duty));
    }
    Ok(ch)
}

/// Next worst-case up-time:
/// f(x) = δ↓(x − η⁺ − δ↑(−x)) + x − η⁻ − η⁺ − δ↑(−x).
/// Returns −∞ when the pulse cancels.
pub fn f_map<T: Real>(
    df: &DelayFunction<T>,
    bounds: EtaBounds<T>,
    prev: T,
) -> Result<T, AnalysisError> {
    let edge = df.inf_down();
    if !(prev > T::zero() && prev < edge) {
        return Err(DelayError::DomainViolation {
            t: prev.to_f64_lossy(),
            edge: Edge::Rising,
            bound: edge.to_f64_lossy(),
        }
        .into());
    }
    let u = df.up(-prev);
    let s = prev - bounds.eta_plus - u;
    Ok(df.down(s) + s - bounds.eta_minus)
}

/// First loop pulse after an input pulse of width `delta0`:
/// g(Δ₀) = δ↓(Δ₀ − η⁺ − δ∞↑) + Δ₀ − η⁻ − η⁺ − δ∞↑.
pub fn g_map<T: Real>(df: &DelayFunction<T>, bounds: EtaBounds<T>, delta0: T) -> T {
    let s = delta0 - bounds.eta_plus - df.inf_up();
    df.down(s) + s - bounds.eta_minus
}

/// Iterates the pulse map from the first loop pulse g(Δ₀) until a pulse
/// cancels, the loop locks high, the value leaves the domain, or `max` values were produced.
pub fn worst_case_up_times<T: Real>(
    df: &DelayFunction<T>,
    bounds: EtaBounds<T>,
    delta0: T,
    max: usize,
) -> Vec<T> {
    let mut out = Vec::new();
    let mut x = g_map(df, bounds, delta0);
    while out.len() < max && x > T::zero() && x < df.inf_down() {
        // the low phase after x is η⁺ + δ↑(−x) − x; without it the falling edge cancels
        if x - bounds.eta_plus - df.up(-x) >= T::zero() {
            break;
        }
        out.push(x);
        match f_map(df, bounds, x) {
            Ok(n) => x = n,
            Err(_) => break,
        }
    }
    out
}

/// Critical input width Δ̃₀ with g(Δ̃₀) = Δ.
pub fn tilde_delta0<T: Real>(
    df: &DelayFunction<T>,
    bounds: EtaBounds<T>,
) -> Result<T, AnalysisError> {
    require_c(df, bounds)?;
    let tau = solve_tau(df, bounds)?;
    let delta = df.down(bounds.eta_plus - tau);
    tilde_delta0_with(df, bounds, delta, df.delta_min()?)
}

fn tilde_delta0_with<T: Real>(
    df: &DelayFunction<T>,
    bounds: EtaBounds<T>,
    delta: T,
    delta_min: T,
) -> Result<T, AnalysisError> {
    let lo = bounds.eta_plus + df.inf_up() - delta_min;
    let hi = bounds.eta_minus + bounds.eta_plus + df.inf_up();
    Ok(Bisection::default().solve(|x| g_map(df, bounds, x) - delta, lo, hi)?)
}

/// Behaviour class of an input pulse of width Δ₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime<T = f64> {
    PassThrough,
    Lock,
    Critical {
        delta_up: T,
        duty: T,
        tilde_delta0: T,
        growth_rate: T,
    },
}

impl<T> Regime<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::PassThrough => "pass_through",
            Regime::Lock => "lock",
            Regime::Critical { .. } => "critical",
        }
    }
}

pub fn classify_pulse<T: Real>(ch: &PulseTrainCharacterization<T>, delta0: T) -> Regime<T> {
    if delta0 >= ch.lock_above {
        Regime::Lock
    } else if delta0 <= ch.pass_below {
        Regime::PassThrough
    } else {
        Regime::Critical {
            delta_up: ch.delta_up,
            duty: ch.duty,
            tilde_delta0: ch.tilde_delta0,
            growth_rate: ch.growth_rate,
        }
    }
}

/// JSON report of a characterization request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharacterizationReport {
    pub delay_function: DelayFunction,
    pub eta_minus: f64,
    pub eta_plus: f64,
    pub tolerance: f64,
    pub constraint: Option<ConstraintC>,
    pub characterization: Option<PulseTrainCharacterization>,
    pub error: Option<String>,
}

impl CharacterizationReport {
    pub fn build(df: &DelayFunction, bounds: EtaBounds, tolerance: f64) -> Self {
        let constraint = constraint_c(df, bounds).ok();
        let (characterization, error) = match characterize(df, bounds) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            delay_function: df.clone(),
            eta_minus: bounds.eta_minus,
            eta_plus: bounds.eta_plus,
            tolerance,
            constraint,
            characterization,
            error,
        }
    }
}
