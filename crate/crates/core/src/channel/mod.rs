//! Point-to-point channels: pure and inertial delays, involution channels,
//! and η-involution channels driven by an adversary.

mod state;
mod strategy;

use serde::{Deserialize, Serialize};

use crate::delay_model::{DelayFunction, Edge};
use crate::signals::{Signal, SignalError, Transition};
use crate::Time;

pub use state::{ChannelState, Emission, PushOutcome, Scheduled};
pub use strategy::{
    read_eta_sequence, worst_case_eta, write_eta_sequence, AdversaryStrategy, EtaBounds, EtaSource,
};

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error("invalid channel: {0}")]
    InvalidSpec(String),
    #[error("fixed eta sequence exhausted at input transition {index}")]
    StrategyExhausted { index: usize },
    #[error("eta value {eta} at position {index} lies outside [-{}, {}]", .bounds.eta_minus, .bounds.eta_plus)]
    EtaOutOfBounds {
        index: usize,
        eta: Time,
        bounds: EtaBounds,
    },
    #[error("eta sequence file: {0}")]
    EtaFile(String),
    #[error("input transition {index} at {time} fell outside the delay domain with no pending transition to cancel")]
    GuardWithoutPredecessor { index: usize, time: Time },
    #[error("input transition {index} at {time} is not after the previous input")]
    NonMonotoneInput { index: usize, time: Time },
    #[error("channel output is not a valid signal: {0}")]
    Output(#[from] SignalError),
}

/// Delay model of a channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSpec {
    Pure {
        d: Time,
    },
    Inertial {
        d: Time,
        window: Time,
    },
    Involution {
        df: DelayFunction,
    },
    EtaInvolution {
        df: DelayFunction,
        bounds: EtaBounds,
        strategy: AdversaryStrategy,
    },
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<(), ChannelError> {
        self.validate_with(false)
    }

    /// Like [`validate`](Self::validate); `allow_zero_delay` admits `Pure { d: 0 }`.
    pub fn validate_with(&self, allow_zero_delay: bool) -> Result<(), ChannelError> {
        let bad = |m: String| Err(ChannelError::InvalidSpec(m));
        match self {
            ChannelSpec::Pure { d } => {
                let ok = d.is_finite() && (*d > 0.0 || (allow_zero_delay && *d == 0.0));
                if !ok {
                    return bad(format!("pure delay must be positive, got {d}"));
                }
            }
            ChannelSpec::Inertial { d, window } => {
                if !(d.is_finite() && *d > 0.0 && window.is_finite() && *window > 0.0) {
                    return bad(format!(
                        "inertial delay needs d > 0 and window > 0, got d={d}, window={window}"
                    ));
                }
            }
            ChannelSpec::Involution { df } => check_df(df)?,
            ChannelSpec::EtaInvolution {
                df,
                bounds,
                strategy,
            } => {
                check_df(df)?;
                bounds.validate()?;
                EtaSource::new(strategy, *bounds)?;
            }
        }
        Ok(())
    }

    pub fn delay_function(&self) -> Option<&DelayFunction> {
        match self {
            ChannelSpec::Involution { df } | ChannelSpec::EtaInvolution { df, .. } => Some(df),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ChannelSpec::Pure { .. } => "pure",
            ChannelSpec::Inertial { .. } => "inertial",
            ChannelSpec::Involution { .. } => "involution",
            ChannelSpec::EtaInvolution { .. } => "eta_involution",
        }
    }

    /// Smallest delay any transition can experience, if bounded below.
    pub fn min_delay(&self) -> Time {
        match self {
            ChannelSpec::Pure { d } | ChannelSpec::Inertial { d, .. } => *d,
            _ => Time::NEG_INFINITY,
        }
    }
}

fn check_df(df: &DelayFunction) -> Result<(), ChannelError> {
    if !df.is_strictly_causal() {
        return Err(ChannelError::InvalidSpec(format!(
            "delay function is not strictly causal (δ↑(0) = {}, δ↓(0) = {})",
            df.up(0.0),
            df.down(0.0)
        )));
    }
    if !(df.inf_up().is_finite() && df.inf_down().is_finite()) {
        return Err(ChannelError::InvalidSpec(
            "delay asymptotes must be finite".into(),
        ));
    }
    Ok(())
}

/// What happened to one input transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Input transition time t_n.
    pub t: Time,
    pub value: bool,
    /// Argument T_n of the delay function; `None` for pure and inertial channels.
    pub big_t: Option<Time>,
    /// Applied delay δ_n (including η_n); −∞ when the domain guard fired.
    pub delta: Time,
    pub eta: Option<Time>,
    pub canceled: bool,
}

impl LogEntry {
    pub fn edge(&self) -> Edge {
        Edge::to_value(self.value)
    }

    pub fn output_time(&self) -> Time {
        self.t + self.delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelRun {
    pub output: Signal,
    pub log: Vec<LogEntry>,
}

/// Channel function: maps an input signal to the output signal.
pub fn apply_channel(spec: &ChannelSpec, input: &Signal) -> Result<ChannelRun, ChannelError> {
    spec.validate_with(true)?;
    let mut st = ChannelState::new(spec.clone(), input.initial())?;
    let mut scheduled = Vec::new();
    for tr in input.transitions() {
        let out = st.push(tr.time, tr.value)?;
        if let Some(c) = out.cancel {
            scheduled.retain(|s: &Scheduled| s.id != c);
        }
        if let Some(s) = out.schedule {
            scheduled.push(s);
        }
    }
    scheduled.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.id.cmp(&b.id)));
    let mut transitions = Vec::with_capacity(scheduled.len());
    for s in scheduled {
        if let Emission::Change(v) = st.emit(s.id) {
            transitions.push(Transition::new(s.time, v));
        }
    }
    let output = Signal::new(input.initial(), transitions)?;
    Ok(ChannelRun {
        output,
        log: st.into_log(),
    })
}

/// Exhaustive pairwise cancellation: each pending time is paired with the
/// latest earlier survivor and both drop out when that one is not earlier.
/// Returns the surviving indices.
pub fn cancellation_oracle(pending: &[Time]) -> Vec<usize> {
    let mut alive = vec![true; pending.len()];
    for m in 0..pending.len() {
        if let Some(n) = (0..m).rev().find(|&n| alive[n]) {
            if pending[n] >= pending[m] {
                alive[n] = false;
                alive[m] = false;
            }
        }
    }
    (0..pending.len()).filter(|&i| alive[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay_model::{exp_channel, ExpChannelParams};
    use approx::assert_relative_eq;

    fn reference() -> DelayFunction {
        exp_channel(ExpChannelParams::new(1.0, 0.5, 0.5).unwrap()).unwrap()
    }

    fn eta_zero() -> ChannelSpec {
        ChannelSpec::EtaInvolution {
            df: reference(),
            bounds: EtaBounds::zero(),
            strategy: AdversaryStrategy::Zero,
        }
    }

    #[test]
    fn single_edge_gets_asymptotic_delay() {
        let run = apply_channel(&eta_zero(), &Signal::step(0.0).unwrap()).unwrap();
        assert_eq!(run.output.len(), 1);
        assert_relative_eq!(
            run.output.transitions()[0].time,
            1.193147180559945,
            epsilon = 1e-12
        );
        assert_eq!(run.log[0].big_t, Some(f64::INFINITY));
    }

    #[test]
    fn short_pulse_cancels() {
        let run = apply_channel(&eta_zero(), &Signal::pulse(0.0, 0.1).unwrap()).unwrap();
        assert!(run.output.is_zero());
        assert!(run.log.iter().all(|e| e.canceled));
        assert_relative_eq!(run.log[1].delta, -1.159021280484145, epsilon = 1e-12);
        assert_relative_eq!(
            run.log[1].big_t.unwrap(),
            0.1 - 1.193147180559945,
            epsilon = 1e-12
        );
    }

    #[test]
    fn long_pulse_passes() {
        let run = apply_channel(
            &ChannelSpec::Involution { df: reference() },
            &Signal::pulse(0.0, 2.0).unwrap(),
        )
        .unwrap();
        let tr = run.output.transitions();
        assert_eq!(tr.len(), 2);
        assert_relative_eq!(tr[0].time, 1.193147180559945, epsilon = 1e-12);
        assert_relative_eq!(tr[1].time, 3.047733722691086, epsilon = 1e-12);
        assert!(!tr[1].value);
    }

    #[test]
    fn pure_and_inertial_baselines() {
        let p = Signal::pulse(0.0, 0.1).unwrap();
        let run = apply_channel(&ChannelSpec::Pure { d: 1.0 }, &p).unwrap();
        assert_eq!(run.output, Signal::pulse(1.0, 0.1).unwrap());
        let run = apply_channel(
            &ChannelSpec::Inertial {
                d: 1.0,
                window: 0.2,
            },
            &p,
        )
        .unwrap();
        assert!(run.output.is_zero());
        let long = Signal::pulse(0.0, 0.5).unwrap();
        let run = apply_channel(
            &ChannelSpec::Inertial {
                d: 1.0,
                window: 0.2,
            },
            &long,
        )
        .unwrap();
        assert_eq!(run.output, Signal::pulse(1.0, 0.5).unwrap());
    }

    #[test]
    fn inertial_drops_redundant_values() {
        // 1@0 is swallowed, 0@0.1 would not change the output, 1@0.5 passes
        let s = Signal::from_pairs(false, &[(0.0, true), (0.1, false), (0.5, true)]).unwrap();
        let run = apply_channel(
            &ChannelSpec::Inertial {
                d: 1.0,
                window: 0.2,
            },
            &s,
        )
        .unwrap();
        assert_eq!(
            run.output,
            Signal::from_pairs(false, &[(1.5, true)]).unwrap()
        );
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(cancellation_oracle(&[1.0, 2.0, 3.0]), [0, 1, 2]);
        assert!(cancellation_oracle(&[2.0, 1.0]).is_empty());
        assert_eq!(cancellation_oracle(&[3.0, 1.0, 2.0]), [2]);
        assert!(cancellation_oracle(&[1.0, 1.0]).is_empty());
    }

    #[test]
    fn invalid_specs() {
        assert!(ChannelSpec::Pure { d: 0.0 }.validate().is_err());
        assert!(ChannelSpec::Pure { d: 0.0 }.validate_with(true).is_ok());
        assert!(ChannelSpec::Inertial {
            d: 1.0,
            window: 0.0
        }
        .validate()
        .is_err());
        let bad = ChannelSpec::EtaInvolution {
            df: reference(),
            bounds: EtaBounds {
                eta_minus: -1.0,
                eta_plus: 0.0,
            },
            strategy: AdversaryStrategy::Zero,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn worst_case_shifts_edges() {
        let spec = ChannelSpec::EtaInvolution {
            df: reference(),
            bounds: EtaBounds::new(0.1, 0.05).unwrap(),
            strategy: AdversaryStrategy::WorstCaseShrink,
        };
        let run = apply_channel(&spec, &Signal::pulse(0.0, 2.0).unwrap()).unwrap();
        let tr = run.output.transitions();
        let d1 = 1.193147180559945 + 0.05;
        assert_relative_eq!(tr[0].time, d1, epsilon = 1e-12);
        let d2 = reference().down(2.0 - d1) - 0.1;
        assert_relative_eq!(tr[1].time, 2.0 + d2, epsilon = 1e-12);
        assert_eq!(run.log[0].eta, Some(0.05));
        assert_eq!(run.log[1].eta, Some(-0.1));
    }

    #[test]
    fn strict_sequence_exhaustion_is_an_error() {
        let spec = ChannelSpec::EtaInvolution {
            df: reference(),
            bounds: EtaBounds::new(0.1, 0.1).unwrap(),
            strategy: AdversaryStrategy::FixedSequence {
                values: vec![0.0],
                strict: true,
            },
        };
        let r = apply_channel(&spec, &Signal::pulse(0.0, 2.0).unwrap());
        assert!(matches!(
            r,
            Err(ChannelError::StrategyExhausted { index: 1 })
        ));
    }
}
