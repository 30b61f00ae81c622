use serde::{Deserialize, Serialize};

use super::{ChannelError, ChannelSpec, EtaSource, LogEntry};
use crate::delay_model::Edge;
use crate::Time;

/// Output transition produced for input transition `id`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheduled {
    pub id: usize,
    pub time: Time,
    pub value: bool,
}

/// Effect of feeding one input transition to a channel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PushOutcome {
    /// Previously scheduled transition that is withdrawn.
    pub cancel: Option<usize>,
    /// Newly scheduled transition.
    pub schedule: Option<Scheduled>,
}

/// Result of releasing a scheduled transition at its time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Emission {
    Change(bool),
    Unchanged,
}

/// Incremental channel function, fed one input transition at a time.
///
/// Batch evaluation and the circuit engine both drive this type, so they
/// agree bit for bit.
#[derive(Debug, Clone)]
pub struct ChannelState {
    spec: ChannelSpec,
    eta: Option<EtaSource>,
    prev_t: Time,
    prev_delta: Time,
    stack: Vec<Scheduled>,
    inertial_last: Option<Scheduled>,
    out_value: bool,
    log: Vec<LogEntry>,
}

impl ChannelState {
    pub fn new(spec: ChannelSpec, initial: bool) -> Result<Self, ChannelError> {
        let eta = match &spec {
            ChannelSpec::EtaInvolution {
                bounds, strategy, ..
            } => Some(EtaSource::new(strategy, *bounds)?),
            _ => None,
        };
        Ok(Self {
            spec,
            eta,
            prev_t: Time::NEG_INFINITY,
            prev_delta: 0.0,
            stack: Vec::new(),
            inertial_last: None,
            out_value: initial,
            log: Vec::new(),
        })
    }

    pub fn spec(&self) -> &ChannelSpec {
        &self.spec
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn into_log(self) -> Vec<LogEntry> {
        self.log
    }

    /// Current output value, counting only released transitions.
    pub fn output_value(&self) -> bool {
        self.out_value
    }

    pub fn push(&mut self, t: Time, value: bool) -> Result<PushOutcome, ChannelError> {
        let index = self.log.len();
        if let Some(last) = self.log.last() {
            if !(t > last.t) {
                return Err(ChannelError::NonMonotoneInput { index, time: t });
            }
        }
        match &self.spec {
            ChannelSpec::Pure { d } => {
                let d = *d;
                self.log.push(entry(t, value, None, d, None));
                Ok(PushOutcome {
                    cancel: None,
                    schedule: Some(Scheduled {
                        id: index,
                        time: t + d,
                        value,
                    }),
                })
            }
            ChannelSpec::Inertial { d, window } => {
                let (d, window) = (*d, *window);
                let mut cancel = None;
                if let Some(prev) = self.inertial_last {
                    if t - self.log[prev.id].t < window {
                        self.log[prev.id].canceled = true;
                        cancel = Some(prev.id);
                    }
                }
                let s = Scheduled {
                    id: index,
                    time: t + d,
                    value,
                };
                self.inertial_last = Some(s);
                self.log.push(entry(t, value, None, d, None));
                Ok(PushOutcome {
                    cancel,
                    schedule: Some(s),
                })
            }
            ChannelSpec::Involution { df } | ChannelSpec::EtaInvolution { df, .. } => {
                let edge = Edge::to_value(value);
                let big_t = t - self.prev_t - self.prev_delta;
                let base = df.eval(edge, big_t);
                let eta = match &mut self.eta {
                    Some(src) => Some(src.next_eta(edge)?),
                    None => None,
                };
                let delta = base + eta.unwrap_or(0.0);
                self.prev_t = t;
                self.prev_delta = delta;
                let time = t + delta;
                self.log.push(entry(t, value, Some(big_t), delta, eta));
                match self.stack.last() {
                    Some(top) if top.time >= time => {
                        let top = self.stack.pop().expect("non-empty");
                        self.log[top.id].canceled = true;
                        self.log[index].canceled = true;
                        Ok(PushOutcome {
                            cancel: Some(top.id),
                            schedule: None,
                        })
                    }
                    _ if time == Time::NEG_INFINITY => {
                        self.log[index].canceled = true;
                        Err(ChannelError::GuardWithoutPredecessor { index, time: t })
                    }
                    _ => {
                        let s = Scheduled {
                            id: index,
                            time,
                            value,
                        };
                        self.stack.push(s);
                        Ok(PushOutcome {
                            cancel: None,
                            schedule: Some(s),
                        })
                    }
                }
            }
        }
    }

    /// Releases scheduled transition `id` to the output.
    pub fn emit(&mut self, id: usize) -> Emission {
        let v = self.log[id].value;
        if v != self.out_value {
            self.out_value = v;
            Emission::Change(v)
        } else {
            Emission::Unchanged
        }
    }
}

fn entry(t: Time, value: bool, big_t: Option<Time>, delta: Time, eta: Option<Time>) -> LogEntry {
    LogEntry {
        t,
        value,
        big_t,
        delta,
        eta,
        canceled: false,
    }
}
