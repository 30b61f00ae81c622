//! Binary signals: an initial value plus a strictly increasing list of
//! alternating transitions.
//!
//! The initial transition at time −∞ is carried by [`Signal::initial`]. Traces
//! are right-continuous: a transition at `t` is already in effect at `t`.

mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use trace::{read_traces, write_traces, TraceError};

use crate::Time;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub time: Time,
    pub value: bool,
}

impl Transition {
    pub fn new(time: Time, value: bool) -> Self {
        Self { time, value }
    }

    pub fn is_rising(&self) -> bool {
        self.value
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("transition {index} at {time} is not after its predecessor at {prev}")]
    NonMonotoneTimes {
        index: usize,
        prev: Time,
        time: Time,
    },
    #[error("transition {index} repeats value {value}")]
    NonAlternatingValues { index: usize, value: bool },
    #[error("transition {index} at negative time {time}")]
    NegativeTime { index: usize, time: Time },
    #[error("transition {index} has non-finite time {time}")]
    NonFiniteTime { index: usize, time: Time },
    #[error("pulse length {0} is not positive")]
    NonPositiveLength(Time),
    #[error("pulse start {0} is negative or non-finite")]
    InvalidStart(Time),
}

/// A validated binary signal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Signal {
    initial: bool,
    transitions: Vec<Transition>,
}

impl<'de> Deserialize<'de> for Signal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            initial: bool,
            transitions: Vec<Transition>,
        }
        let raw = Raw::deserialize(d)?;
        Signal::new(raw.initial, raw.transitions).map_err(serde::de::Error::custom)
    }
}

impl Signal {
    /// Validates and builds a signal.
    pub fn new(initial: bool, transitions: Vec<Transition>) -> Result<Self, SignalError> {
        let mut prev_value = initial;
        let mut prev_time = Time::NEG_INFINITY;
        for (index, tr) in transitions.iter().enumerate() {
            if !tr.time.is_finite() {
                return Err(SignalError::NonFiniteTime {
                    index,
                    time: tr.time,
                });
            }
            if tr.time < 0.0 {
                return Err(SignalError::NegativeTime {
                    index,
                    time: tr.time,
                });
            }
            if tr.time <= prev_time {
                return Err(SignalError::NonMonotoneTimes {
                    index,
                    prev: prev_time,
                    time: tr.time,
                });
            }
            if tr.value == prev_value {
                return Err(SignalError::NonAlternatingValues {
                    index,
                    value: tr.value,
                });
            }
            prev_time = tr.time;
            prev_value = tr.value;
        }
        Ok(Self {
            initial,
            transitions,
        })
    }

    /// `make_signal` with `(time, bit)` pairs.
    pub fn from_pairs(initial: bool, pairs: &[(Time, bool)]) -> Result<Self, SignalError> {
        Self::new(
            initial,
            pairs.iter().map(|&(t, v)| Transition::new(t, v)).collect(),
        )
    }

    pub fn constant(value: bool) -> Self {
        Self {
            initial: value,
            transitions: Vec::new(),
        }
    }

    pub fn zero() -> Self {
        Self::constant(false)
    }

    /// Initial value 0, rising at `start`, falling at `start + length`.
    pub fn pulse(start: Time, length: Time) -> Result<Self, SignalError> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(SignalError::NonPositiveLength(length));
        }
        if !(start >= 0.0) || !start.is_finite() {
            return Err(SignalError::InvalidStart(start));
        }
        Self::new(
            false,
            vec![
                Transition::new(start, true),
                Transition::new(start + length, false),
            ],
        )
    }

    /// Initial value 0 and a single rising transition at `start`.
    pub fn step(start: Time) -> Result<Self, SignalError> {
        Self::new(false, vec![Transition::new(start, true)])
    }

    pub fn initial(&self) -> bool {
        self.initial
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// True for a signal with no transitions and initial value 0.
    pub fn is_zero(&self) -> bool {
        !self.initial && self.transitions.is_empty()
    }

    pub fn final_value(&self) -> bool {
        self.transitions.last().map_or(self.initial, |t| t.value)
    }

    pub fn last_time(&self) -> Option<Time> {
        self.transitions.last().map(|t| t.time)
    }

    /// Trace value at `t` (right-continuous).
    pub fn value_at(&self, t: Time) -> bool {
        let idx = self.transitions.partition_point(|tr| tr.time <= t);
        if idx == 0 {
            self.initial
        } else {
            self.transitions[idx - 1].value
        }
    }

    /// Drops every transition at or after `horizon`.
    pub fn truncated(&self, horizon: Time) -> Signal {
        let idx = self.transitions.partition_point(|tr| tr.time < horizon);
        Signal {
            initial: self.initial,
            transitions: self.transitions[..idx].to_vec(),
        }
    }

    /// Whether the signal still switches within `guard` seconds before `horizon`.
    pub fn active_near(&self, horizon: Time, guard: Time) -> bool {
        self.transitions
            .iter()
            .any(|tr| tr.time < horizon && tr.time >= horizon - guard)
    }

    /// Splits the trace into its 1-intervals before `horizon`.
    ///
    /// An initially high signal yields a first pulse starting at −∞ whose
    /// `up_time` is unbounded. An interval still high at the horizon has
    /// `end == None`; the last pulse has `down_time == None`.
    pub fn decompose_pulses(&self, horizon: Time) -> Vec<Pulse> {
        let trs = &self.truncated(horizon).transitions;
        let mut spans: Vec<(Time, Option<Time>)> = Vec::new();
        if self.initial {
            spans.push((Time::NEG_INFINITY, None));
        }
        for tr in trs {
            if tr.value {
                spans.push((tr.time, None));
            } else if let Some(last) = spans.last_mut() {
                last.1 = Some(tr.time);
            }
        }
        spans
            .iter()
            .enumerate()
            .map(|(i, &(start, end))| {
                let up_time = end.map(|e| e - start).filter(|u| u.is_finite());
                let down_time = match (end, spans.get(i + 1)) {
                    (Some(e), Some(&(next, _))) => Some(next - e),
                    _ => None,
                };
                Pulse {
                    start,
                    end,
                    up_time,
                    down_time,
                }
            })
            .collect()
    }

    /// Rebuilds a signal from a pulse decomposition.
    pub fn from_pulses(pulses: &[Pulse]) -> Result<Self, SignalError> {
        let mut initial = false;
        let mut transitions = Vec::with_capacity(pulses.len() * 2);
        for (i, p) in pulses.iter().enumerate() {
            if i == 0 && p.start == Time::NEG_INFINITY {
                initial = true;
            } else {
                transitions.push(Transition::new(p.start, true));
            }
            if let Some(end) = p.end {
                transitions.push(Transition::new(end, false));
            }
        }
        Self::new(initial, transitions)
    }

    /// Shifts every transition by `dt` (must keep times non-negative).
    pub fn shifted(&self, dt: Time) -> Result<Signal, SignalError> {
        Self::new(
            self.initial,
            self.transitions
                .iter()
                .map(|t| Transition::new(t.time + dt, t.value))
                .collect(),
        )
    }
}

/// One high interval of a signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    /// Rising edge time; −∞ for the initial interval of a high signal.
    pub start: Time,
    /// Falling edge time, `None` if still high at the horizon.
    pub end: Option<Time>,
    /// `None` when the pulse has not fallen before the horizon.
    pub up_time: Option<Time>,
    /// Time from the falling edge to the next rising edge.
    pub down_time: Option<Time>,
}

impl Pulse {
    pub fn period(&self) -> Option<Time> {
        Some(self.up_time? + self.down_time?)
    }

    pub fn duty_cycle(&self) -> Option<f64> {
        Some(self.up_time? / self.period()?)
    }
}
